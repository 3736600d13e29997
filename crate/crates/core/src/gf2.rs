//! Dense linear algebra over GF(2).
//!
//! Bit vectors and matrices are packed into `u64` words so row operations are
//! word-parallel. Everything here is a pure value type; all operations return
//! fresh values or mutate through `&mut self` only.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GfError {
    #[error("matrix is singular (rank {rank} < dimension {dim})")]
    SingularMatrix { rank: usize, dim: usize },
    #[error("bad shape: {0}")]
    BadShape(String),
    #[error("no solution: right-hand side not in column space")]
    NoSolution,
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

const WORD: usize = 64;

fn words_for(bits: usize) -> usize {
    bits.div_ceil(WORD)
}

/// Dense bit vector over GF(2).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitVec {
    len: usize,
    words: Vec<u64>,
}

impl BitVec {
    pub fn zeros(len: usize) -> Self {
        BitVec {
            len,
            words: vec![0; words_for(len)],
        }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut v = BitVec::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                v.set(i, true);
            }
        }
        v
    }

    /// Unit vector e_i of the given length.
    pub fn unit(len: usize, i: usize) -> Self {
        let mut v = BitVec::zeros(len);
        v.set(i, true);
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        (self.words[i / WORD] >> (i % WORD)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, b: bool) {
        debug_assert!(i < self.len);
        let (w, s) = (i / WORD, i % WORD);
        if b {
            self.words[w] |= 1 << s;
        } else {
            self.words[w] &= !(1 << s);
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        self.words[i / WORD] ^= 1 << (i % WORD);
    }

    pub fn xor_assign(&mut self, other: &BitVec) {
        debug_assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    /// Inner product over GF(2).
    pub fn dot(&self, other: &BitVec) -> bool {
        debug_assert_eq!(self.len, other.len);
        let mut acc = 0u32;
        for (a, b) in self.words.iter().zip(&other.words) {
            acc ^= (a & b).count_ones() & 1;
        }
        acc & 1 == 1
    }

    pub fn weight(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&i| self.get(i))
    }

    pub fn leading_one(&self) -> Option<usize> {
        self.iter_ones().next()
    }

    pub fn trailing_one(&self) -> Option<usize> {
        (0..self.len).rev().find(|&i| self.get(i))
    }

    /// Concatenate two vectors.
    pub fn concat(&self, other: &BitVec) -> BitVec {
        let mut v = BitVec::zeros(self.len + other.len);
        for i in self.iter_ones() {
            v.set(i, true);
        }
        for i in other.iter_ones() {
            v.set(self.len + i, true);
        }
        v
    }

    pub fn slice(&self, start: usize, end: usize) -> BitVec {
        assert!(start <= end && end <= self.len);
        let mut v = BitVec::zeros(end - start);
        for i in start..end {
            if self.get(i) {
                v.set(i - start, true);
            }
        }
        v
    }

    /// AND of two vectors.
    pub fn and(&self, other: &BitVec) -> BitVec {
        debug_assert_eq!(self.len, other.len);
        let mut v = self.clone();
        for (a, b) in v.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
        v
    }
}

impl fmt::Debug for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            write!(f, "{}", if self.get(i) { '1' } else { '0' })?;
        }
        Ok(())
    }
}

/// Dense matrix over GF(2), row-major with packed rows.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    words_per_row: usize,
    bits: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let wpr = words_for(cols);
        BitMatrix {
            rows,
            cols,
            words_per_row: wpr,
            bits: vec![0; rows * wpr],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = BitMatrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    pub fn from_rows(rows: &[BitVec]) -> Self {
        let cols = rows.first().map_or(0, BitVec::len);
        let mut m = BitMatrix::zeros(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), cols, "ragged rows");
            m.set_row(i, r);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = BitMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                if f(i, j) {
                    m.set(i, j, true);
                }
            }
        }
        m
    }

    pub fn diagonal(mask: &BitVec) -> Self {
        BitMatrix::from_fn(mask.len(), mask.len(), |i, j| i == j && mask.get(i))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        debug_assert!(r < self.rows && c < self.cols);
        (self.bits[r * self.words_per_row + c / WORD] >> (c % WORD)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, b: bool) {
        debug_assert!(r < self.rows && c < self.cols);
        let idx = r * self.words_per_row + c / WORD;
        let s = c % WORD;
        if b {
            self.bits[idx] |= 1 << s;
        } else {
            self.bits[idx] &= !(1 << s);
        }
    }

    pub fn row(&self, r: usize) -> BitVec {
        let mut v = BitVec::zeros(self.cols);
        let base = r * self.words_per_row;
        v.words.copy_from_slice(&self.bits[base..base + self.words_per_row]);
        v
    }

    pub fn set_row(&mut self, r: usize, v: &BitVec) {
        assert_eq!(v.len(), self.cols);
        let base = r * self.words_per_row;
        self.bits[base..base + self.words_per_row].copy_from_slice(&v.words);
    }

    pub fn col(&self, c: usize) -> BitVec {
        let mut v = BitVec::zeros(self.rows);
        for r in 0..self.rows {
            if self.get(r, c) {
                v.set(r, true);
            }
        }
        v
    }

    #[inline]
    pub fn xor_row_into(&mut self, src: usize, dst: usize) {
        debug_assert_ne!(src, dst);
        let (s, d) = (src * self.words_per_row, dst * self.words_per_row);
        for w in 0..self.words_per_row {
            let v = self.bits[s + w];
            self.bits[d + w] ^= v;
        }
    }

    pub fn xor_col_into(&mut self, src: usize, dst: usize) {
        for r in 0..self.rows {
            if self.get(r, src) {
                let b = self.get(r, dst);
                self.set(r, dst, !b);
            }
        }
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for w in 0..self.words_per_row {
            self.bits.swap(a * self.words_per_row + w, b * self.words_per_row + w);
        }
    }

    pub fn transpose(&self) -> BitMatrix {
        BitMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn mul(&self, other: &BitMatrix) -> BitMatrix {
        assert_eq!(self.cols, other.rows, "dimension mismatch in mul");
        let mut out = BitMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let obase = i * out.words_per_row;
            for j in 0..self.cols {
                if self.get(i, j) {
                    let rbase = j * other.words_per_row;
                    for w in 0..other.words_per_row {
                        out.bits[obase + w] ^= other.bits[rbase + w];
                    }
                }
            }
        }
        out
    }

    /// Row vector times matrix.
    pub fn mul_vec_left(&self, v: &BitVec) -> BitVec {
        assert_eq!(v.len(), self.rows);
        let mut out = BitVec::zeros(self.cols);
        for i in v.iter_ones() {
            out.xor_assign(&self.row(i));
        }
        out
    }

    /// Matrix times column vector.
    pub fn mul_vec_right(&self, v: &BitVec) -> BitVec {
        assert_eq!(v.len(), self.cols);
        let mut out = BitVec::zeros(self.rows);
        for r in 0..self.rows {
            if self.row(r).dot(v) {
                out.set(r, true);
            }
        }
        out
    }

    pub fn add(&self, other: &BitMatrix) -> BitMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.bits.iter_mut().zip(&other.bits) {
            *a ^= b;
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.bits.iter().all(|&w| w == 0)
    }

    pub fn hstack(&self, other: &BitMatrix) -> BitMatrix {
        assert_eq!(self.rows, other.rows);
        BitMatrix::from_fn(self.rows, self.cols + other.cols, |i, j| {
            if j < self.cols {
                self.get(i, j)
            } else {
                other.get(i, j - self.cols)
            }
        })
    }

    pub fn vstack(&self, other: &BitMatrix) -> BitMatrix {
        assert_eq!(self.cols, other.cols);
        BitMatrix::from_fn(self.rows + other.rows, self.cols, |i, j| {
            if i < self.rows {
                self.get(i, j)
            } else {
                other.get(i - self.rows, j)
            }
        })
    }

    pub fn submatrix(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> BitMatrix {
        assert!(r1 <= self.rows && c1 <= self.cols && r0 <= r1 && c0 <= c1);
        BitMatrix::from_fn(r1 - r0, c1 - c0, |i, j| self.get(r0 + i, c0 + j))
    }

    pub fn is_upper_triangular(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| !self.get(i, j)))
    }

    pub fn is_lower_triangular(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (i + 1..self.cols).all(|j| !self.get(i, j)))
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn is_permutation(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| self.row(i).weight() == 1)
            && (0..self.cols).all(|j| self.col(j).weight() == 1)
    }

    /// Reduced row-echelon form with rank and pivot columns.
    pub fn rref(&self) -> (BitMatrix, usize, Vec<usize>) {
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..m.cols {
            if r == m.rows {
                break;
            }
            if let Some(p) = (r..m.rows).find(|&i| m.get(i, c)) {
                m.swap_rows(r, p);
                for i in 0..m.rows {
                    if i != r && m.get(i, c) {
                        m.xor_row_into(r, i);
                    }
                }
                pivots.push(c);
                r += 1;
            }
        }
        (m, r, pivots)
    }

    pub fn rank(&self) -> usize {
        self.rref().1
    }

    /// Inverse of a square matrix.
    pub fn invert(&self) -> Result<BitMatrix, GfError> {
        if self.rows != self.cols {
            return Err(GfError::BadShape(format!(
                "invert needs a square matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        let n = self.rows;
        let aug = self.hstack(&BitMatrix::identity(n));
        let (red, _, pivots) = aug.rref();
        // Any pivot escaping the left block means the left block is singular.
        let rank = pivots.iter().take_while(|&&c| c < n).count();
        if rank < n {
            return Err(GfError::SingularMatrix { rank, dim: n });
        }
        Ok(red.submatrix(0, n, n, 2 * n))
    }

    /// Solve A x = b for x, if a solution exists.
    pub fn solve(&self, b: &BitVec) -> Result<BitVec, GfError> {
        assert_eq!(b.len(), self.rows, "rhs length mismatch");
        let bm = BitMatrix::from_rows(&[b.clone()]).transpose();
        let aug = self.hstack(&bm);
        let (red, _, pivots) = aug.rref();
        // A pivot in the last column means the system is inconsistent.
        if pivots.contains(&self.cols) {
            return Err(GfError::NoSolution);
        }
        let mut x = BitVec::zeros(self.cols);
        for (r, &c) in pivots.iter().enumerate() {
            if red.get(r, self.cols) {
                x.set(c, true);
            }
        }
        Ok(x)
    }

    /// Basis of the null space {x : A x = 0}, returned as rows.
    pub fn kernel(&self) -> BitMatrix {
        let (red, rank, pivots) = self.rref();
        let free: Vec<usize> = (0..self.cols).filter(|c| !pivots.contains(c)).collect();
        let mut rows = Vec::with_capacity(free.len());
        for &f in &free {
            let mut v = BitVec::zeros(self.cols);
            v.set(f, true);
            for (r, &p) in pivots.iter().enumerate().take(rank) {
                if red.get(r, f) {
                    v.set(p, true);
                }
            }
            rows.push(v);
        }
        if rows.is_empty() {
            BitMatrix::zeros(0, self.cols)
        } else {
            BitMatrix::from_rows(&rows)
        }
    }

    /// True if v lies in the row space of self.
    pub fn row_space_contains(&self, v: &BitVec) -> bool {
        assert_eq!(v.len(), self.cols);
        let (red, rank, pivots) = self.rref();
        let mut w = v.clone();
        for (r, &c) in pivots.iter().enumerate().take(rank) {
            if w.get(c) {
                w.xor_assign(&red.row(r));
            }
        }
        w.is_zero()
    }

    /// True if the two matrices span the same row space.
    pub fn same_row_space(&self, other: &BitMatrix) -> bool {
        if self.cols != other.cols {
            return false;
        }
        let (a, ra, _) = self.rref();
        let (b, rb, _) = other.rref();
        ra == rb && (0..ra).all(|i| a.row(i) == b.row(i))
    }

    /// Text form: "rows cols" header then one '0'/'1' line per row.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.rows, self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                s.push(if self.get(r, c) { '1' } else { '0' });
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<BitMatrix, GfError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (ln, header) = lines.next().ok_or(GfError::Parse {
            line: 1,
            msg: "empty matrix text".into(),
        })?;
        let mut it = header.split_whitespace();
        let parse_dim = |s: Option<&str>| -> Result<usize, GfError> {
            s.and_then(|t| t.parse().ok()).ok_or(GfError::Parse {
                line: ln + 1,
                msg: "expected \"rows cols\" header".into(),
            })
        };
        let rows = parse_dim(it.next())?;
        let cols = parse_dim(it.next())?;
        let mut m = BitMatrix::zeros(rows, cols);
        for r in 0..rows {
            let (ln, line) = lines.next().ok_or(GfError::Parse {
                line: ln + 2 + r,
                msg: format!("expected {rows} rows, got {r}"),
            })?;
            let line = line.trim();
            if line.len() != cols {
                return Err(GfError::Parse {
                    line: ln + 1,
                    msg: format!("row has {} entries, expected {cols}", line.len()),
                });
            }
            for (c, ch) in line.chars().enumerate() {
                match ch {
                    '0' => {}
                    '1' => m.set(r, c, true),
                    _ => {
                        return Err(GfError::Parse {
                            line: ln + 1,
                            msg: format!("invalid character '{ch}'"),
                        })
                    }
                }
            }
        }
        Ok(m)
    }
}

impl fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BitMatrix {}x{}", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "{:?}", self.row(r))?;
        }
        Ok(())
    }
}

/// Permutation of {0..n}; `to[i]` is where index i is sent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutation {
    to: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation { to: (0..n).collect() }
    }

    pub fn from_map(to: Vec<usize>) -> Self {
        let n = to.len();
        let mut seen = vec![false; n];
        for &t in &to {
            assert!(t < n && !seen[t], "not a permutation");
            seen[t] = true;
        }
        Permutation { to }
    }

    pub fn len(&self) -> usize {
        self.to.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.to.iter().enumerate().all(|(i, &t)| i == t)
    }

    pub fn apply(&self, i: usize) -> usize {
        self.to[i]
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.to.len()];
        for (i, &t) in self.to.iter().enumerate() {
            inv[t] = i;
        }
        Permutation { to: inv }
    }

    /// Composition: first self, then other.
    pub fn then(&self, other: &Permutation) -> Permutation {
        assert_eq!(self.len(), other.len());
        Permutation {
            to: self.to.iter().map(|&t| other.to[t]).collect(),
        }
    }

    /// Matrix P with P[i][to[i]] = 1, so that row-vector v·P permutes positions.
    pub fn matrix(&self) -> BitMatrix {
        BitMatrix::from_fn(self.len(), self.len(), |i, j| self.to[i] == j)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.to
    }
}

/// Triangular completion from the appendix recursion.
///
/// Given an n x n lower-triangular `l1` with zero diagonal, returns lower
/// triangular (L2, L3) with L2 + L3 = I, rows of (L2|L3) in the row space of
/// (I|L1), and (L2|L3) full rank.
pub fn triangular_complete(l1: &BitMatrix) -> Result<(BitMatrix, BitMatrix), GfError> {
    let n = l1.rows();
    if l1.cols() != n {
        return Err(GfError::BadShape("triangular_complete needs square input".into()));
    }
    for i in 0..n {
        if l1.get(i, i) {
            return Err(GfError::BadShape("diagonal must be zero".into()));
        }
        for j in i + 1..n {
            if l1.get(i, j) {
                return Err(GfError::BadShape("input must be lower triangular".into()));
            }
        }
    }
    // Rows of L = (I | L1); l'_j = l_j + sum_{p in I_j} l'_p with
    // I_j = {p < j : l_j c_p = 1} and c_p the p-th column of (I;I).
    let mut lp: Vec<BitVec> = Vec::with_capacity(n);
    for j in 0..n {
        let mut row = BitVec::unit(2 * n, j);
        for p in l1.row(j).iter_ones() {
            row.set(n + p, true);
        }
        // l_j c_p = delta_jp + L1[j][p]; for p < j that is L1[j][p].
        let idx: Vec<usize> = (0..j).filter(|&p| l1.get(j, p)).collect();
        for p in idx {
            row.xor_assign(&lp[p]);
        }
        lp.push(row);
    }
    let mut l2 = BitMatrix::zeros(n, n);
    let mut l3 = BitMatrix::zeros(n, n);
    for (j, row) in lp.iter().enumerate() {
        for c in row.iter_ones() {
            if c < n {
                l2.set(j, c, true);
            } else {
                l3.set(j, c - n, true);
            }
        }
        // Per-step triangularity from the recursion.
        debug_assert!((j + 1..n).all(|c| !row.get(c) && !row.get(n + c)));
    }
    debug_assert_eq!(l2.add(&l3), BitMatrix::identity(n));
    Ok((l2, l3))
}

/// Row-combination matrix C with (L2|L3) = C (I|L1); equals L2 by construction.
pub fn triangular_complete_combination(l1: &BitMatrix) -> Result<BitMatrix, GfError> {
    let (l2, _) = triangular_complete(l1)?;
    Ok(l2)
}

/// Bruhat factorization V = U1 · P(perm) · U2 over GF(2) with U1, U2 upper
/// triangular invertible and P a permutation matrix.
pub fn gl2_bruhat(v: &BitMatrix) -> Result<(BitMatrix, Permutation, BitMatrix), GfError> {
    let n = v.rows();
    if v.cols() != n {
        return Err(GfError::BadShape("gl2_bruhat needs a square matrix".into()));
    }
    let mut w = v.clone();
    let mut u1 = BitMatrix::identity(n);
    let mut u2 = BitMatrix::identity(n);
    let mut pivot_row_of_col = vec![usize::MAX; n];
    let mut is_pivot_row = vec![false; n];
    for c in 0..n {
        // Bottom-most row with a 1 in this column; previous pivot rows are
        // already cleared to the right of their pivot column.
        let r = (0..n)
            .rev()
            .find(|&i| !is_pivot_row[i] && w.get(i, c))
            .ok_or(GfError::SingularMatrix { rank: c, dim: n })?;
        for i in 0..r {
            if w.get(i, c) {
                // row_i += row_r with i < r: left factor stays upper triangular.
                w.xor_row_into(r, i);
                u1.xor_col_into(i, r);
            }
        }
        for j in c + 1..n {
            if w.get(r, j) {
                // col_j += col_c with c < j: right factor stays upper triangular.
                w.xor_col_into(c, j);
                u2.xor_row_into(j, c);
            }
        }
        pivot_row_of_col[c] = r;
        is_pivot_row[r] = true;
    }
    // w is now the permutation matrix: row r has its 1 at column perm[r].
    let mut to = vec![0usize; n];
    for (c, &r) in pivot_row_of_col.iter().enumerate() {
        to[r] = c;
    }
    let perm = Permutation::from_map(to);
    debug_assert_eq!(w, perm.matrix());
    debug_assert!(u1.is_upper_triangular() && u2.is_upper_triangular());
    Ok((u1, perm, u2))
}

/// Decompose symmetric S as S = W Λ W^t + D with W unit upper triangular and
/// Λ, D diagonal (given as masks).
pub fn symmetric_split(s: &BitMatrix) -> Result<(BitMatrix, BitVec, BitVec), GfError> {
    let n = s.rows();
    if !s.is_symmetric() {
        return Err(GfError::BadShape("symmetric_split needs a symmetric matrix".into()));
    }
    let mut rem = s.clone();
    let mut w = BitMatrix::identity(n);
    let mut lambda = BitVec::zeros(n);
    // Fix off-diagonal content column by column from the right; u_j is
    // supported on 0..=j so W stays unit upper triangular.
    for j in (0..n).rev() {
        let col: Vec<usize> = (0..j).filter(|&i| rem.get(i, j)).collect();
        if col.is_empty() {
            continue;
        }
        lambda.set(j, true);
        let mut u = BitVec::zeros(n);
        u.set(j, true);
        for &i in &col {
            u.set(i, true);
            w.set(i, j, true);
        }
        // rem -= u u^t
        for a in u.iter_ones() {
            for b in u.iter_ones() {
                let cur = rem.get(a, b);
                rem.set(a, b, !cur);
            }
        }
    }
    // What is left is diagonal.
    let mut d = BitVec::zeros(n);
    for i in 0..n {
        if rem.get(i, i) {
            d.set(i, true);
            rem.set(i, i, false);
        }
    }
    if !rem.is_zero() {
        return Err(GfError::BadShape("symmetric_split left a residue".into()));
    }
    // Recompose check in debug builds.
    debug_assert_eq!(
        {
            let lam = BitMatrix::diagonal(&lambda);
            w.mul(&lam).mul(&w.transpose()).add(&BitMatrix::diagonal(&d))
        },
        *s
    );
    Ok((w, lambda, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_matrix(rng: &mut StdRng, rows: usize, cols: usize) -> BitMatrix {
        BitMatrix::from_fn(rows, cols, |_, _| rng.gen())
    }

    fn random_invertible(rng: &mut StdRng, n: usize) -> BitMatrix {
        loop {
            let m = random_matrix(rng, n, n);
            if m.rank() == n {
                return m;
            }
        }
    }

    #[test]
    fn rref_identity() {
        let (r, rank, piv) = BitMatrix::identity(3).rref();
        assert_eq!(r, BitMatrix::identity(3));
        assert_eq!(rank, 3);
        assert_eq!(piv, vec![0, 1, 2]);
    }

    #[test]
    fn rref_zero() {
        let (r, rank, piv) = BitMatrix::zeros(2, 4).rref();
        assert!(r.is_zero());
        assert_eq!(rank, 0);
        assert!(piv.is_empty());
    }

    #[test]
    fn rref_preserves_row_space_against_enumeration_oracle() {
        // Oracle: enumerate all 2^4 row combinations of a random 4x6 matrix.
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..20 {
            let m = random_matrix(&mut rng, 4, 6);
            let (r, rank, _) = m.rref();
            let span = |mat: &BitMatrix| -> std::collections::HashSet<Vec<bool>> {
                let mut s = std::collections::HashSet::new();
                for mask in 0..16u32 {
                    let mut v = BitVec::zeros(6);
                    for i in 0..4 {
                        if mask >> i & 1 == 1 {
                            v.xor_assign(&mat.row(i));
                        }
                    }
                    s.insert((0..6).map(|j| v.get(j)).collect());
                }
                s
            };
            assert_eq!(span(&m), span(&r));
            assert_eq!(span(&m).len(), 1 << rank);
        }
    }

    #[test]
    fn rref_idempotent() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..50 {
            let m = random_matrix(&mut rng, 5, 8);
            let (r1, _, _) = m.rref();
            let (r2, _, _) = r1.rref();
            assert_eq!(r1, r2);
        }
    }

    #[test]
    fn invert_identity_and_2x2() {
        assert_eq!(BitMatrix::identity(4).invert().unwrap(), BitMatrix::identity(4));
        let u = BitMatrix::from_fn(2, 2, |i, j| i <= j);
        let inv = u.invert().unwrap();
        assert_eq!(u.mul(&inv), BitMatrix::identity(2));
        assert_eq!(inv, u); // [[1,1],[0,1]] is an involution over GF(2)
    }

    #[test]
    fn invert_singular() {
        let m = BitMatrix::from_fn(2, 2, |_, _| true);
        assert!(matches!(m.invert(), Err(GfError::SingularMatrix { rank: 1, dim: 2 })));
    }

    #[test]
    fn solve_examples() {
        let a = BitMatrix::identity(3);
        let b = BitVec::from_bits(&[true, false, true]);
        assert_eq!(a.solve(&b).unwrap(), b);

        let z = BitMatrix::zeros(3, 3);
        assert_eq!(z.solve(&b), Err(GfError::NoSolution));

        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..50 {
            let a = random_matrix(&mut rng, 5, 7);
            let x0 = BitVec::from_bits(&(0..7).map(|_| rng.gen()).collect::<Vec<_>>());
            let b = a.mul_vec_right(&x0);
            let x = a.solve(&b).unwrap();
            assert_eq!(a.mul_vec_right(&x), b);
        }
    }

    #[test]
    fn kernel_is_null_space() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..30 {
            let a = random_matrix(&mut rng, 4, 6);
            let k = a.kernel();
            assert_eq!(k.rows(), 6 - a.rank());
            for i in 0..k.rows() {
                assert!(a.mul_vec_right(&k.row(i)).is_zero());
            }
            assert_eq!(k.rank(), k.rows());
        }
    }

    #[test]
    fn triangular_complete_zero_case() {
        for n in 1..5 {
            let (l2, l3) = triangular_complete(&BitMatrix::zeros(n, n)).unwrap();
            assert_eq!(l2, BitMatrix::identity(n));
            assert!(l3.is_zero());
        }
    }

    #[test]
    fn triangular_complete_n2_matches_exhaustive_search() {
        // L1 = [[0,0],[1,0]]: exhaustive search over row combinations of (I|L1)
        // satisfying the postconditions singles out L2=[[1,0],[1,1]], L3=[[0,0],[1,0]].
        let l1 = BitMatrix::from_fn(2, 2, |i, j| i == 1 && j == 0);
        let (l2, l3) = triangular_complete(&l1).unwrap();
        assert_eq!(l2, BitMatrix::from_fn(2, 2, |i, j| j <= i));
        assert_eq!(l3, l1);
    }

    fn check_triangular_complete_postconditions(l1: &BitMatrix) {
        let n = l1.rows();
        let (l2, l3) = triangular_complete(l1).unwrap();
        assert!(l2.is_lower_triangular() && l3.is_lower_triangular());
        assert_eq!(l2.add(&l3), BitMatrix::identity(n));
        let lp = l2.hstack(&l3);
        assert_eq!(lp.rank(), n);
        let l = BitMatrix::identity(n).hstack(l1);
        for i in 0..n {
            assert!(l.row_space_contains(&lp.row(i)));
        }
    }

    #[test]
    fn triangular_complete_exhaustive_small_and_random_large() {
        // Every admissible L1 for n <= 4: 2^(n(n-1)/2) cases.
        for n in 1..=4usize {
            let free = n * (n - 1) / 2;
            for mask in 0u64..(1 << free) {
                let mut l1 = BitMatrix::zeros(n, n);
                let mut bit = 0;
                for i in 0..n {
                    for j in 0..i {
                        if mask >> bit & 1 == 1 {
                            l1.set(i, j, true);
                        }
                        bit += 1;
                    }
                }
                check_triangular_complete_postconditions(&l1);
            }
        }
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..200 {
            let n = rng.gen_range(5..=16);
            let mut l1 = BitMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..i {
                    l1.set(i, j, rng.gen());
                }
            }
            check_triangular_complete_postconditions(&l1);
        }
    }

    #[test]
    fn triangular_complete_rejects_bad_shapes() {
        let m = BitMatrix::identity(3);
        assert!(matches!(triangular_complete(&m), Err(GfError::BadShape(_))));
        let m = BitMatrix::zeros(2, 3);
        assert!(matches!(triangular_complete(&m), Err(GfError::BadShape(_))));
    }

    #[test]
    fn bruhat_trivial_cases() {
        let (u1, p, u2) = gl2_bruhat(&BitMatrix::identity(3)).unwrap();
        assert_eq!(u1, BitMatrix::identity(3));
        assert!(p.is_identity());
        assert_eq!(u2, BitMatrix::identity(3));

        let ex = BitMatrix::from_fn(2, 2, |i, j| i != j);
        let (u1, p, u2) = gl2_bruhat(&ex).unwrap();
        assert_eq!(u1, BitMatrix::identity(2));
        assert_eq!(p.matrix(), ex);
        assert_eq!(u2, BitMatrix::identity(2));
    }

    #[test]
    fn bruhat_recomposes_randomly() {
        let mut rng = StdRng::seed_from_u64(23);
        for n in 1..=16usize {
            for _ in 0..(if n <= 6 { 100 } else { 25 }) {
                let v = random_invertible(&mut rng, n);
                let (u1, p, u2) = gl2_bruhat(&v).unwrap();
                assert!(u1.is_upper_triangular());
                assert!(u2.is_upper_triangular());
                assert_eq!(u1.mul(&p.matrix()).mul(&u2), v);
            }
        }
    }

    #[test]
    fn bruhat_rejects_singular() {
        let m = BitMatrix::from_fn(2, 2, |_, _| true);
        assert!(matches!(gl2_bruhat(&m), Err(GfError::SingularMatrix { .. })));
    }

    #[test]
    fn symmetric_split_random() {
        let mut rng = StdRng::seed_from_u64(31);
        for n in 1..=10usize {
            for _ in 0..50 {
                let mut s = BitMatrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..=i {
                        let b: bool = rng.gen();
                        s.set(i, j, b);
                        s.set(j, i, b);
                    }
                }
                let (w, lam, d) = symmetric_split(&s).unwrap();
                assert!(w.is_upper_triangular());
                let re = w
                    .mul(&BitMatrix::diagonal(&lam))
                    .mul(&w.transpose())
                    .add(&BitMatrix::diagonal(&d));
                assert_eq!(re, s);
            }
        }
    }

    #[test]
    fn matrix_text_round_trip() {
        let mut rng = StdRng::seed_from_u64(41);
        let m = random_matrix(&mut rng, 3, 5);
        let t = m.to_text();
        assert_eq!(BitMatrix::from_text(&t).unwrap(), m);
        assert!(BitMatrix::from_text("2 2\n01\n0").is_err());
        assert!(BitMatrix::from_text("2 2\n01\n0x\n").is_err());
    }
}
