//! Exact integer linear algebra: dense matrices over arbitrary-precision
//! integers, Smith normal form with unimodular transforms, cokernel and
//! kernel presentations, and integer linear solving.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense integer matrix, row-major. Zero rows or columns are allowed.
/// Serializes entries as decimal strings so the JSON stays exact.
#[derive(Clone, PartialEq, Eq)]
pub struct IMat {
    rows: usize,
    cols: usize,
    data: Vec<BigInt>,
}

impl Serialize for IMat {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = ser.serialize_struct("IMat", 3)?;
        st.serialize_field("rows", &self.rows)?;
        st.serialize_field("cols", &self.cols)?;
        let data: Vec<String> = self.data.iter().map(|x| x.to_string()).collect();
        st.serialize_field("data", &data)?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for IMat {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<IMat, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            rows: usize,
            cols: usize,
            data: Vec<String>,
        }
        let raw = Raw::deserialize(de)?;
        if raw.data.len() != raw.rows * raw.cols {
            return Err(serde::de::Error::custom("matrix data length mismatch"));
        }
        let mut data = Vec::with_capacity(raw.data.len());
        for s in raw.data {
            let v: BigInt = s
                .parse()
                .map_err(|_| serde::de::Error::custom("bad integer literal"))?;
            data.push(v);
        }
        Ok(IMat { rows: raw.rows, cols: raw.cols, data })
    }
}

/// Decimal-string serialization for vectors of big integers.
pub mod big_vec {
    use num_bigint::BigInt;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[BigInt], ser: S) -> Result<S::Ok, S::Error> {
        ser.collect_seq(v.iter().map(|x| x.to_string()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<BigInt>, D::Error> {
        let raw: Vec<String> = Vec::deserialize(de)?;
        raw.into_iter()
            .map(|s| s.parse().map_err(|_| serde::de::Error::custom("bad integer literal")))
            .collect()
    }
}

/// Decimal-string serialization for a list of integer vectors.
pub mod big_vec_vec {
    use num_bigint::BigInt;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Vec<BigInt>], ser: S) -> Result<S::Ok, S::Error> {
        let raw: Vec<Vec<String>> = v
            .iter()
            .map(|row| row.iter().map(|x| x.to_string()).collect())
            .collect();
        serde::Serialize::serialize(&raw, ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<Vec<BigInt>>, D::Error> {
        let raw: Vec<Vec<String>> = Vec::deserialize(de)?;
        raw.into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|s| {
                        s.parse()
                            .map_err(|_| serde::de::Error::custom("bad integer literal"))
                    })
                    .collect()
            })
            .collect()
    }
}

impl IMat {
    pub fn zero(rows: usize, cols: usize) -> IMat {
        IMat { rows, cols, data: vec![BigInt::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> IMat {
        let mut m = IMat::zero(n, n);
        for i in 0..n {
            m.set_i64(i, i, 1);
        }
        m
    }

    pub fn from_rows_i64(rows: &[&[i64]]) -> IMat {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut m = IMat::zero(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c);
            for (j, &x) in row.iter().enumerate() {
                m.set_i64(i, j, x);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> &BigInt {
        &self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: BigInt) {
        self.data[r * self.cols + c] = v;
    }

    pub fn set_i64(&mut self, r: usize, c: usize, v: i64) {
        self.set(r, c, BigInt::from(v));
    }

    pub fn get_i64(&self, r: usize, c: usize) -> i64 {
        i64::try_from(self.get(r, c)).expect("entry out of i64 range")
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| x.is_zero())
    }

    pub fn is_identity(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| {
                (0..self.cols).all(|j| {
                    if i == j {
                        self.get(i, j).is_one()
                    } else {
                        self.get(i, j).is_zero()
                    }
                })
            })
    }

    pub fn transpose(&self) -> IMat {
        let mut out = IMat::zero(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c).clone());
            }
        }
        out
    }

    pub fn mul(&self, other: &IMat) -> IMat {
        assert_eq!(self.cols, other.rows, "dimension mismatch in mul");
        let mut out = IMat::zero(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a.is_zero() {
                    continue;
                }
                for c in 0..other.cols {
                    let b = other.get(k, c);
                    if !b.is_zero() {
                        let cur = out.get(r, c) + a * b;
                        out.set(r, c, cur);
                    }
                }
            }
        }
        out
    }

    pub fn add(&self, other: &IMat) -> IMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for i in 0..self.data.len() {
            out.data[i] = &self.data[i] + &other.data[i];
        }
        out
    }

    pub fn neg(&self) -> IMat {
        let mut out = self.clone();
        for x in &mut out.data {
            *x = -(x.clone());
        }
        out
    }

    pub fn mul_vec(&self, v: &[BigInt]) -> Vec<BigInt> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.get(r, c) * &v[c]).sum())
            .collect()
    }

    /// Submatrix given by row and column index lists.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> IMat {
        let mut out = IMat::zero(rows.len(), cols.len());
        for (i, &r) in rows.iter().enumerate() {
            for (j, &c) in cols.iter().enumerate() {
                out.set(i, j, self.get(r, c).clone());
            }
        }
        out
    }

    pub fn col(&self, c: usize) -> Vec<BigInt> {
        (0..self.rows).map(|r| self.get(r, c).clone()).collect()
    }

    pub fn max_abs(&self) -> BigInt {
        self.data
            .iter()
            .map(|x| x.abs())
            .max()
            .unwrap_or_else(BigInt::zero)
    }

    /// Determinant by fraction-free Gaussian elimination (Bareiss).
    pub fn det(&self) -> BigInt {
        assert_eq!(self.rows, self.cols, "det of non-square matrix");
        let n = self.rows;
        if n == 0 {
            return BigInt::one();
        }
        let mut m = self.clone();
        let mut sign = BigInt::one();
        let mut prev = BigInt::one();
        for k in 0..n - 1 {
            if m.get(k, k).is_zero() {
                let swap = (k + 1..n).find(|&r| !m.get(r, k).is_zero());
                match swap {
                    None => return BigInt::zero(),
                    Some(r) => {
                        for c in 0..n {
                            let a = m.get(k, c).clone();
                            let b = m.get(r, c).clone();
                            m.set(k, c, b);
                            m.set(r, c, a);
                        }
                        sign = -sign;
                    }
                }
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    let v = (m.get(i, j) * m.get(k, k) - m.get(i, k) * m.get(k, j)) / &prev;
                    m.set(i, j, v);
                }
                m.set(i, k, BigInt::zero());
            }
            prev = m.get(k, k).clone();
        }
        sign * m.get(n - 1, n - 1).clone()
    }

    /// Inverse of a matrix with determinant ±1. Panics otherwise.
    pub fn inverse_unimodular(&self) -> IMat {
        assert_eq!(self.rows, self.cols);
        let snf = smith_normal_form(self);
        assert!(
            snf.factors.iter().all(|d| d.is_one()),
            "matrix is not unimodular"
        );
        assert_eq!(snf.factors.len(), self.rows, "matrix is not invertible");
        // U M V = I  =>  M^{-1} = V U.
        snf.v.mul(&snf.u)
    }

    pub fn rank(&self) -> usize {
        smith_normal_form(self).factors.len()
    }
}

impl fmt::Debug for IMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "IMat {}x{}", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "[")?;
            for c in 0..self.cols {
                if c > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{}", self.get(r, c))?;
            }
            writeln!(f, "]")?;
        }
        Ok(())
    }
}

/// Result of a Smith normal form computation: `u * m * v = d` exactly,
/// with `u`, `v` unimodular and `d` in diagonal form with the divisibility
/// chain `d_i | d_{i+1}`.
#[derive(Clone, Debug)]
pub struct SnfResult {
    pub u: IMat,
    pub d: IMat,
    pub v: IMat,
    /// Nonzero diagonal entries `d_1..d_r`, all positive.
    pub factors: Vec<BigInt>,
}

/// Smith normal form. Deterministic: the pivot is the smallest nonzero
/// absolute value, ties broken by row-major position.
pub fn smith_normal_form(m: &IMat) -> SnfResult {
    let rows = m.rows();
    let cols = m.cols();
    let mut d = m.clone();
    let mut u = IMat::identity(rows);
    let mut v = IMat::identity(cols);

    let k = rows.min(cols);
    let mut t = 0usize;
    while t < k {
        // Find pivot among d[t.., t..]: smallest |entry| != 0, row-major ties.
        let mut pivot: Option<(usize, usize)> = None;
        for r in t..rows {
            for c in t..cols {
                if d.get(r, c).is_zero() {
                    continue;
                }
                match pivot {
                    None => pivot = Some((r, c)),
                    Some((pr, pc)) => {
                        if d.get(r, c).abs() < d.get(pr, pc).abs() {
                            pivot = Some((r, c));
                        }
                    }
                }
            }
        }
        let Some((pr, pc)) = pivot else { break };
        swap_rows(&mut d, &mut u, t, pr);
        swap_cols(&mut d, &mut v, t, pc);
        if d.get(t, t).is_negative() {
            negate_row(&mut d, &mut u, t);
        }

        // Clear row and column t; restart if a remainder shrinks the pivot.
        let mut dirty = true;
        while dirty {
            dirty = false;
            for r in t + 1..rows {
                if d.get(r, t).is_zero() {
                    continue;
                }
                let q = floor_div(d.get(r, t), d.get(t, t));
                if !q.is_zero() {
                    row_sub_mul(&mut d, &mut u, r, t, &q);
                }
                if !d.get(r, t).is_zero() {
                    // Remainder is smaller than the pivot: swap it up.
                    swap_rows(&mut d, &mut u, t, r);
                    if d.get(t, t).is_negative() {
                        negate_row(&mut d, &mut u, t);
                    }
                    dirty = true;
                }
            }
            for c in t + 1..cols {
                if d.get(t, c).is_zero() {
                    continue;
                }
                let q = floor_div(d.get(t, c), d.get(t, t));
                if !q.is_zero() {
                    col_sub_mul(&mut d, &mut v, c, t, &q);
                }
                if !d.get(t, c).is_zero() {
                    swap_cols(&mut d, &mut v, t, c);
                    if d.get(t, t).is_negative() {
                        negate_row(&mut d, &mut u, t);
                    }
                    dirty = true;
                }
            }
        }

        // Enforce divisibility d_t | entries of the remaining block.
        let mut fixed = false;
        'scan: for r in t + 1..rows {
            for c in t + 1..cols {
                if !(d.get(r, c) % d.get(t, t)).is_zero() {
                    // Fold row r into row t and redo this stage.
                    row_add(&mut d, &mut u, t, r);
                    fixed = true;
                    break 'scan;
                }
            }
        }
        if fixed {
            continue;
        }
        t += 1;
    }

    let mut factors = Vec::new();
    for i in 0..k {
        let x = d.get(i, i);
        if x.is_zero() {
            break;
        }
        factors.push(x.clone());
    }
    debug_assert_eq!(u.mul(m).mul(&v), d);
    SnfResult { u, d, v, factors }
}

fn floor_div(a: &BigInt, b: &BigInt) -> BigInt {
    a.div_floor(b)
}

fn swap_rows(d: &mut IMat, u: &mut IMat, a: usize, b: usize) {
    if a == b {
        return;
    }
    for c in 0..d.cols() {
        let x = d.get(a, c).clone();
        let y = d.get(b, c).clone();
        d.set(a, c, y);
        d.set(b, c, x);
    }
    for c in 0..u.cols() {
        let x = u.get(a, c).clone();
        let y = u.get(b, c).clone();
        u.set(a, c, y);
        u.set(b, c, x);
    }
}

fn swap_cols(d: &mut IMat, v: &mut IMat, a: usize, b: usize) {
    if a == b {
        return;
    }
    for r in 0..d.rows() {
        let x = d.get(r, a).clone();
        let y = d.get(r, b).clone();
        d.set(r, a, y);
        d.set(r, b, x);
    }
    for r in 0..v.rows() {
        let x = v.get(r, a).clone();
        let y = v.get(r, b).clone();
        v.set(r, a, y);
        v.set(r, b, x);
    }
}

fn negate_row(d: &mut IMat, u: &mut IMat, r: usize) {
    for c in 0..d.cols() {
        let x = -d.get(r, c).clone();
        d.set(r, c, x);
    }
    for c in 0..u.cols() {
        let x = -u.get(r, c).clone();
        u.set(r, c, x);
    }
}

/// row a -= q * row b
fn row_sub_mul(d: &mut IMat, u: &mut IMat, a: usize, b: usize, q: &BigInt) {
    for c in 0..d.cols() {
        let x = d.get(a, c) - q * d.get(b, c);
        d.set(a, c, x);
    }
    for c in 0..u.cols() {
        let x = u.get(a, c) - q * u.get(b, c);
        u.set(a, c, x);
    }
}

/// row a += row b
fn row_add(d: &mut IMat, u: &mut IMat, a: usize, b: usize) {
    for c in 0..d.cols() {
        let x = d.get(a, c) + d.get(b, c);
        d.set(a, c, x);
    }
    for c in 0..u.cols() {
        let x = u.get(a, c) + u.get(b, c);
        u.set(a, c, x);
    }
}

/// col a -= q * col b
fn col_sub_mul(d: &mut IMat, v: &mut IMat, a: usize, b: usize, q: &BigInt) {
    for r in 0..d.rows() {
        let x = d.get(r, a) - q * d.get(r, b);
        d.set(r, a, x);
    }
    for r in 0..v.rows() {
        let x = v.get(r, a) - q * v.get(r, b);
        v.set(r, a, x);
    }
}

/// Gcd of all entries; zero for the zero matrix.
pub fn matrix_gcd(m: &IMat) -> BigInt {
    let mut g = BigInt::zero();
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            g = g.gcd(m.get(r, c));
        }
    }
    g
}

/// Finitely generated abelian group presented as `Z^m / M Z^n`.
///
/// `gen_change` is the unimodular `U` of the Smith normal form: the class of
/// `x` has SNF coordinates `U x`, in which the group is
/// `⊕ Z/d_i ⊕ Z^free_rank` (factors exclude 1's).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FGAbPresentation {
    pub presentation: IMat,
    #[serde(with = "big_vec")]
    pub factors: Vec<BigInt>,
    pub free_rank: usize,
    pub gen_change: IMat,
    pub rank: usize,
}

impl FGAbPresentation {
    pub fn is_trivial(&self) -> bool {
        self.factors.is_empty() && self.free_rank == 0
    }

    /// Same isomorphism class of groups.
    pub fn same_type(&self, other: &FGAbPresentation) -> bool {
        self.factors == other.factors && self.free_rank == other.free_rank
    }

    /// Does `x` represent zero, i.e. lie in the image of the presentation?
    pub fn is_zero_class(&self, x: &[BigInt]) -> bool {
        solve_integer(&self.presentation, x).is_some()
    }
}

/// Presentation of the cokernel `Z^m / M Z^n`.
pub fn cokernel(m: &IMat) -> FGAbPresentation {
    let snf = smith_normal_form(m);
    let rank = snf.factors.len();
    let factors: Vec<BigInt> = snf
        .factors
        .iter()
        .filter(|d| !d.is_one())
        .cloned()
        .collect();
    FGAbPresentation {
        presentation: m.clone(),
        factors,
        free_rank: m.rows() - rank,
        gen_change: snf.u,
        rank,
    }
}

/// Basis of the integer kernel lattice of `M` (columns `x` with `Mx = 0`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeBasis {
    #[serde(with = "big_vec_vec")]
    pub basis: Vec<Vec<BigInt>>,
}

impl LatticeBasis {
    pub fn rank(&self) -> usize {
        self.basis.len()
    }
}

pub fn kernel(m: &IMat) -> LatticeBasis {
    let snf = smith_normal_form(m);
    let r = snf.factors.len();
    // Columns r..n of V span the kernel.
    let basis = (r..m.cols()).map(|c| snf.v.col(c)).collect();
    LatticeBasis { basis }
}

/// A particular integer solution of `Mx = b`, or `None` when unsolvable.
/// Deterministic: derived from the Smith normal form.
pub fn solve_integer(m: &IMat, b: &[BigInt]) -> Option<Vec<BigInt>> {
    assert_eq!(m.rows(), b.len(), "rhs length mismatch");
    let snf = smith_normal_form(m);
    let ub = snf.u.mul_vec(b);
    let r = snf.factors.len();
    let mut z = vec![BigInt::zero(); m.cols()];
    for (i, ubi) in ub.iter().enumerate() {
        if i < r {
            let d = &snf.factors[i];
            if !(ubi % d).is_zero() {
                return None;
            }
            z[i] = ubi / d;
        } else if !ubi.is_zero() {
            return None;
        }
    }
    Some(snf.v.mul_vec(&z))
}

#[derive(Debug, Error)]
pub enum HomError {
    #[error("matrix does not carry the image lattice into the target image (column {0})")]
    ImageNotCarried(usize),
}

/// Homomorphism `cok M -> cok M'` given by `[x] |-> [T x]`.
/// Well-definedness (`T * im M ⊆ im M'`) is checked exactly.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CokHom {
    pub matrix: IMat,
    pub source: FGAbPresentation,
    pub target: FGAbPresentation,
}

impl CokHom {
    /// Do the two homomorphisms (with equal source/target) agree as maps?
    pub fn same_map(&self, other: &CokHom) -> bool {
        assert_eq!(self.matrix.cols(), other.matrix.cols());
        for c in 0..self.matrix.cols() {
            let diff: Vec<BigInt> = (0..self.matrix.rows())
                .map(|r| self.matrix.get(r, c) - other.matrix.get(r, c))
                .collect();
            if !self.target.is_zero_class(&diff) {
                return false;
            }
        }
        true
    }

    /// Is this map an isomorphism of the underlying groups?
    pub fn is_isomorphism(&self) -> bool {
        if !self.source.same_type(&self.target) {
            return false;
        }
        // Surjectivity: every target generator is hit modulo the image.
        // [T | M'] must span Z^target_rows together.
        let m = &self.target.presentation;
        let rows = m.rows();
        let mut aug = IMat::zero(rows, self.matrix.cols() + m.cols());
        for r in 0..rows {
            for c in 0..self.matrix.cols() {
                aug.set(r, c, self.matrix.get(r, c).clone());
            }
            for c in 0..m.cols() {
                aug.set(r, self.matrix.cols() + c, m.get(r, c).clone());
            }
        }
        let snf = smith_normal_form(&aug);
        // Surjective onto cok M' iff SNF of [T|M'] has all factors 1 and full row rank.
        let surj = snf.factors.len() == rows && snf.factors.iter().all(|d| d.is_one());
        // For finitely generated groups of equal type, surjective => bijective.
        surj
    }
}

/// Construct the induced homomorphism `cok M -> cok M'`, `[x] |-> [T x]`,
/// rejecting `T` that does not carry `im M` into `im M'`.
pub fn induced_hom(m: &IMat, m_prime: &IMat, t: &IMat) -> Result<CokHom, HomError> {
    assert_eq!(t.cols(), m.rows(), "T must act on the source ambient space");
    assert_eq!(t.rows(), m_prime.rows(), "T must land in the target ambient space");
    for c in 0..m.cols() {
        let img = t.mul_vec(&m.col(c));
        if solve_integer(m_prime, &img).is_none() {
            return Err(HomError::ImageNotCarried(c));
        }
    }
    Ok(CokHom {
        matrix: t.clone(),
        source: cokernel(m),
        target: cokernel(m_prime),
    })
}
