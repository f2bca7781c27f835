//! Exact arithmetic over prime fields and the dense vector/matrix
//! primitives (rank, independence, solving, direct-sum decomposition)
//! the rest of the crate is built on.

use thiserror::Error;

/// A canonical field element, always a residue in `[0, q)`.
pub type Elem = u64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FieldError {
    #[error("{0} is not a prime")]
    NotPrime(u64),
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecomposeError {
    #[error("vector does not lie in the sum of the two spans")]
    NotInSum,
    #[error("the two spans intersect nontrivially")]
    OverlappingSpans,
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    let mut d = 3u64;
    while d.saturating_mul(d) <= n {
        if n % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

/// Smallest prime `>= n`.
pub fn next_prime_at_least(n: u64) -> u64 {
    let mut p = n.max(2);
    while !is_prime(p) {
        p += 1;
    }
    p
}

/// A prime field of order `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldSpec {
    q: u64,
}

impl FieldSpec {
    pub fn new(q: u64) -> Result<Self, FieldError> {
        if !is_prime(q) {
            return Err(FieldError::NotPrime(q));
        }
        Ok(FieldSpec { q })
    }

    pub fn order(self) -> u64 {
        self.q
    }

    /// Canonical residue of an arbitrary integer.
    pub fn elem(self, x: i64) -> Elem {
        let q = self.q as i64;
        (x.rem_euclid(q)) as Elem
    }

    pub fn add(self, a: Elem, b: Elem) -> Elem {
        ((a as u128 + b as u128) % self.q as u128) as Elem
    }

    pub fn sub(self, a: Elem, b: Elem) -> Elem {
        self.add(a, self.neg(b))
    }

    pub fn neg(self, a: Elem) -> Elem {
        if a == 0 {
            0
        } else {
            self.q - a
        }
    }

    pub fn mul(self, a: Elem, b: Elem) -> Elem {
        ((a as u128 * b as u128) % self.q as u128) as Elem
    }

    pub fn pow(self, mut base: Elem, mut exp: u64) -> Elem {
        let mut acc: Elem = 1;
        base %= self.q;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    pub fn inv(self, a: Elem) -> Result<Elem, FieldError> {
        if a % self.q == 0 {
            return Err(FieldError::ZeroInverse);
        }
        Ok(self.pow(a, self.q - 2))
    }
}

/// A vector of canonical residues.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FieldVector {
    entries: Vec<Elem>,
}

impl FieldVector {
    pub fn new(entries: Vec<Elem>) -> Self {
        FieldVector { entries }
    }

    /// Builds a vector from arbitrary integers, reducing each entry.
    pub fn canonical(f: FieldSpec, entries: &[i64]) -> Self {
        FieldVector {
            entries: entries.iter().map(|&x| f.elem(x)).collect(),
        }
    }

    pub fn zeros(len: usize) -> Self {
        FieldVector {
            entries: vec![0; len],
        }
    }

    pub fn unit(len: usize, i: usize) -> Self {
        let mut v = Self::zeros(len);
        v.entries[i] = 1;
        v
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize) -> Elem {
        self.entries[i]
    }

    pub fn set(&mut self, i: usize, v: Elem) {
        self.entries[i] = v;
    }

    pub fn entries(&self) -> &[Elem] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&x| x == 0)
    }

    pub fn add(&self, other: &FieldVector, f: FieldSpec) -> FieldVector {
        assert_eq!(self.len(), other.len());
        FieldVector {
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(&a, &b)| f.add(a, b))
                .collect(),
        }
    }

    pub fn sub(&self, other: &FieldVector, f: FieldSpec) -> FieldVector {
        assert_eq!(self.len(), other.len());
        FieldVector {
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(&a, &b)| f.sub(a, b))
                .collect(),
        }
    }

    pub fn scaled(&self, c: Elem, f: FieldSpec) -> FieldVector {
        FieldVector {
            entries: self.entries.iter().map(|&a| f.mul(a, c)).collect(),
        }
    }

    /// `self += c * other`
    pub fn add_scaled_assign(&mut self, other: &FieldVector, c: Elem, f: FieldSpec) {
        assert_eq!(self.len(), other.len());
        for (a, &b) in self.entries.iter_mut().zip(&other.entries) {
            *a = f.add(*a, f.mul(c, b));
        }
    }

    pub fn dot(&self, other: &FieldVector, f: FieldSpec) -> Elem {
        assert_eq!(self.len(), other.len());
        let mut acc = 0;
        for (&a, &b) in self.entries.iter().zip(&other.entries) {
            acc = f.add(acc, f.mul(a, b));
        }
        acc
    }
}

/// A dense row-major matrix over a prime field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Elem>,
}

impl FieldMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Elem>) -> Self {
        assert_eq!(rows * cols, data.len());
        FieldMatrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        FieldMatrix {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1);
        }
        m
    }

    pub fn from_rows(rows: &[FieldVector]) -> Result<Self, FieldError> {
        let cols = rows.first().map_or(0, |r| r.len());
        for r in rows {
            if r.len() != cols {
                return Err(FieldError::DimensionMismatch(format!(
                    "row of length {} in a matrix of width {}",
                    r.len(),
                    cols
                )));
            }
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            data.extend_from_slice(r.entries());
        }
        Ok(FieldMatrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> Elem {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Elem) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> FieldVector {
        FieldVector::new(self.data[r * self.cols..(r + 1) * self.cols].to_vec())
    }

    pub fn transpose(&self) -> FieldMatrix {
        let mut t = FieldMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    /// Concatenates the columns of `self` and `other`.
    pub fn hstack(&self, other: &FieldMatrix) -> FieldMatrix {
        assert_eq!(self.rows, other.rows);
        let mut m = FieldMatrix::zeros(self.rows, self.cols + other.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                m.set(r, c, self.get(r, c));
            }
            for c in 0..other.cols {
                m.set(r, self.cols + c, other.get(r, c));
            }
        }
        m
    }

    /// Stacks the rows of `self` on top of `other`.
    pub fn vstack(&self, other: &FieldMatrix) -> FieldMatrix {
        assert_eq!(self.cols, other.cols);
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        FieldMatrix::new(self.rows + other.rows, self.cols, data)
    }

    pub fn mul_vec(&self, v: &FieldVector, f: FieldSpec) -> FieldVector {
        assert_eq!(self.cols, v.len());
        let mut out = FieldVector::zeros(self.rows);
        for r in 0..self.rows {
            let mut acc = 0;
            for c in 0..self.cols {
                acc = f.add(acc, f.mul(self.get(r, c), v.get(c)));
            }
            out.set(r, acc);
        }
        out
    }

    /// In-place reduction to reduced row echelon form; returns the pivot columns.
    /// Pivots take the first nonzero entry scanning down each column.
    fn reduce(&mut self, f: FieldSpec) -> Vec<usize> {
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..self.cols {
            if row == self.rows {
                break;
            }
            let Some(pr) = (row..self.rows).find(|&r| self.get(r, col) != 0) else {
                continue;
            };
            if pr != row {
                for c in 0..self.cols {
                    let tmp = self.get(row, c);
                    self.set(row, c, self.get(pr, c));
                    self.set(pr, c, tmp);
                }
            }
            let inv = f.inv(self.get(row, col)).expect("pivot is nonzero");
            for c in 0..self.cols {
                self.set(row, c, f.mul(self.get(row, c), inv));
            }
            for r in 0..self.rows {
                if r != row && self.get(r, col) != 0 {
                    let factor = self.get(r, col);
                    for c in 0..self.cols {
                        let v = f.sub(self.get(r, c), f.mul(factor, self.get(row, c)));
                        self.set(r, c, v);
                    }
                }
            }
            pivots.push(col);
            row += 1;
        }
        pivots
    }

    pub fn rank(&self, f: FieldSpec) -> usize {
        let mut m = self.clone();
        m.reduce(f).len()
    }

    /// Basis of the right null space `{x : self * x = 0}`.
    pub fn null_space(&self, f: FieldSpec) -> Vec<FieldVector> {
        let mut m = self.clone();
        let pivots = m.reduce(f);
        let mut basis = Vec::new();
        let mut pivot_of_col = vec![None; self.cols];
        for (i, &c) in pivots.iter().enumerate() {
            pivot_of_col[c] = Some(i);
        }
        for free in 0..self.cols {
            if pivot_of_col[free].is_some() {
                continue;
            }
            let mut v = FieldVector::zeros(self.cols);
            v.set(free, 1);
            for (i, &pc) in pivots.iter().enumerate() {
                v.set(pc, f.neg(m.get(i, free)));
            }
            basis.push(v);
        }
        basis
    }
}

/// Outcome of solving `A x = b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveOutcome {
    Unique(FieldVector),
    /// Consistent but with free variables; carries the particular solution
    /// obtained by setting all free variables to zero.
    Underdetermined(FieldVector),
    Inconsistent,
}

impl SolveOutcome {
    pub fn particular(&self) -> Option<&FieldVector> {
        match self {
            SolveOutcome::Unique(x) | SolveOutcome::Underdetermined(x) => Some(x),
            SolveOutcome::Inconsistent => None,
        }
    }
}

pub fn solve(a: &FieldMatrix, b: &FieldVector, f: FieldSpec) -> SolveOutcome {
    assert_eq!(a.rows(), b.len(), "right-hand side length must match rows");
    let mut aug = FieldMatrix::zeros(a.rows(), a.cols() + 1);
    for r in 0..a.rows() {
        for c in 0..a.cols() {
            aug.set(r, c, a.get(r, c));
        }
        aug.set(r, a.cols(), b.get(r));
    }
    let pivots = aug.reduce(f);
    if pivots.contains(&a.cols()) {
        return SolveOutcome::Inconsistent;
    }
    let mut x = FieldVector::zeros(a.cols());
    for (i, &c) in pivots.iter().enumerate() {
        x.set(c, aug.get(i, a.cols()));
    }
    if pivots.len() == a.cols() {
        SolveOutcome::Unique(x)
    } else {
        SolveOutcome::Underdetermined(x)
    }
}

/// True iff the vectors are linearly independent. The empty collection is
/// independent.
pub fn is_independent(vs: &[FieldVector], f: FieldSpec) -> Result<bool, FieldError> {
    if vs.is_empty() {
        return Ok(true);
    }
    let m = FieldMatrix::from_rows(vs)?;
    Ok(m.rank(f) == vs.len())
}

/// Splits `x` into `u + w` with `u` in the row span of `basis_u` and `w` in
/// the row span of `basis_w`. The spans must intersect only in zero, which
/// makes the pair unique.
pub fn decompose(
    x: &FieldVector,
    basis_u: &FieldMatrix,
    basis_w: &FieldMatrix,
    f: FieldSpec,
) -> Result<(FieldVector, FieldVector), DecomposeError> {
    assert_eq!(basis_u.cols(), x.len());
    assert_eq!(basis_w.cols(), x.len());
    let stacked = basis_u.vstack(basis_w);
    if basis_u.rank(f) + basis_w.rank(f) != stacked.rank(f) {
        return Err(DecomposeError::OverlappingSpans);
    }
    // Columns are the basis rows; a solution expresses x as one combination
    // from each span.
    let m = stacked.transpose();
    let coeffs = match solve(&m, x, f) {
        SolveOutcome::Inconsistent => return Err(DecomposeError::NotInSum),
        outcome => outcome.particular().cloned().expect("consistent system"),
    };
    let mut u = FieldVector::zeros(x.len());
    for i in 0..basis_u.rows() {
        u.add_scaled_assign(&basis_u.row(i), coeffs.get(i), f);
    }
    let mut w = FieldVector::zeros(x.len());
    for i in 0..basis_w.rows() {
        w.add_scaled_assign(&basis_w.row(i), coeffs.get(basis_u.rows() + i), f);
    }
    Ok((u, w))
}
