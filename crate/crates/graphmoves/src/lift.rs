//! Bounded search for block equivalences `U B V = B'`: diagonal blocks are
//! enumerated within an entry budget, off-diagonal blocks are recovered by
//! an exact integer linear solve of `U B = B' W` with `W = V^{-1}`.
//!
//! The search is deterministic: candidates are ranked by their enumeration
//! counter, so parallel and sequential runs return the same certificate.

use std::time::Instant;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::blocks::{verify_equiv, BlockError, BlockMatrix, EquivVerdict, EquivWitness};
use crate::intmat::{kernel, smith_normal_form, solve_integer, IMat};

/// Constraints on the searched witness.
#[derive(Clone, Debug, Default)]
pub struct LiftConstraints {
    /// Blocks whose `V{i}` must be the 1x1 identity (requires `n_i = 1`).
    pub pin_v_one: Vec<usize>,
    /// Require determinant +1 on every nonempty diagonal block.
    pub require_sl: bool,
    /// Restrict the witness to the identity outside this single block.
    pub pin_identity_outside: Option<usize>,
    /// Optional wall-clock deadline; exceeding it reports exhaustion.
    pub deadline: Option<Instant>,
}

/// Search result: a verified witness, or an exhausted budget. Exhaustion is
/// never a proof of non-equivalence.
#[derive(Clone, Debug)]
pub enum LiftOutcome {
    Found(EquivWitness),
    Exhausted,
}

impl LiftOutcome {
    pub fn witness(&self) -> Option<&EquivWitness> {
        match self {
            LiftOutcome::Found(w) => Some(w),
            LiftOutcome::Exhausted => None,
        }
    }
}

/// One admissible diagonal block choice.
#[derive(Clone, Debug)]
pub(crate) struct DiagCandidate {
    key: u128,
    u: IMat,
    w: IMat,
}

/// Decode enumeration digit `d` to an entry value: 0, 1, -1, 2, -2, ...
fn digit_value(d: u64) -> i64 {
    if d == 0 {
        0
    } else if d % 2 == 1 {
        ((d + 1) / 2) as i64
    } else {
        -((d / 2) as i64)
    }
}

fn det_i128(m: &[i128], n: usize) -> i128 {
    match n {
        0 => 1,
        1 => m[0],
        2 => m[0] * m[3] - m[1] * m[2],
        3 => {
            m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
                + m[2] * (m[3] * m[7] - m[4] * m[6])
        }
        _ => {
            // Fraction-free elimination for larger blocks.
            let mut a = m.to_vec();
            let mut sign = 1i128;
            let mut prev = 1i128;
            for k in 0..n - 1 {
                if a[k * n + k] == 0 {
                    let Some(r) = (k + 1..n).find(|&r| a[r * n + k] != 0) else {
                        return 0;
                    };
                    for c in 0..n {
                        a.swap(k * n + c, r * n + c);
                    }
                    sign = -sign;
                }
                for i in k + 1..n {
                    for j in k + 1..n {
                        a[i * n + j] =
                            (a[i * n + j] * a[k * n + k] - a[i * n + k] * a[k * n + j]) / prev;
                    }
                    a[i * n + k] = 0;
                }
                prev = a[k * n + k];
            }
            sign * a[n * n - 1]
        }
    }
}

/// Adjugate of a square i128 matrix (cofactor transpose).
fn adjugate_i128(m: &[i128], n: usize) -> Vec<i128> {
    let mut adj = vec![0i128; n * n];
    if n == 1 {
        adj[0] = 1;
        return adj;
    }
    let minor = |r: usize, c: usize| -> i128 {
        let mut sub = Vec::with_capacity((n - 1) * (n - 1));
        for i in 0..n {
            if i == r {
                continue;
            }
            for j in 0..n {
                if j == c {
                    continue;
                }
                sub.push(m[i * n + j]);
            }
        }
        det_i128(&sub, n - 1)
    };
    for r in 0..n {
        for c in 0..n {
            let sign = if (r + c) % 2 == 0 { 1 } else { -1 };
            adj[c * n + r] = sign * minor(r, c);
        }
    }
    adj
}

fn imat_to_i128(m: &IMat) -> Option<Vec<i128>> {
    let mut out = Vec::with_capacity(m.rows() * m.cols());
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            out.push(i128::try_from(m.get(r, c)).ok()?);
        }
    }
    Some(out)
}

fn imat_from_i64(rows: usize, cols: usize, data: &[i64]) -> IMat {
    let mut m = IMat::zero(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            m.set_i64(r, c, data[r * cols + c]);
        }
    }
    m
}

/// Candidates for one diagonal block: all `(U{i}, V{i})` with
/// `U{i} B1{i} V{i} = B2{i}`, entries bounded by the budget, subject to the
/// pin/SL constraints. Sorted by enumeration key.
fn block_candidates(
    b1: &IMat,
    b2: &IMat,
    budget: u32,
    pin_v: bool,
    require_sl: bool,
    deadline: Option<Instant>,
) -> Vec<DiagCandidate> {
    let m = b1.rows();
    let n = b1.cols();
    if m == 0 && n == 0 {
        return vec![DiagCandidate { key: 0, u: IMat::zero(0, 0), w: IMat::zero(0, 0) }];
    }
    if pin_v {
        assert_eq!(n, 1, "V can only be pinned on single-column blocks");
    }

    let base = 2 * u64::from(budget) + 1;
    let cells = n * n;
    let total: u128 = (0..cells).fold(1u128, |acc, _| acc.saturating_mul(base as u128));
    let b1_small = imat_to_i128(b1);
    let b2_small = imat_to_i128(b2);
    let (Some(b1s), Some(b2s)) = (b1_small, b2_small) else {
        return Vec::new();
    };

    // At most this many left factors are kept per decoded right factor.
    const U_CAP: u128 = 1 << 12;
    let eval = |counter: u128| -> Vec<DiagCandidate> {
        // Decode V.
        let mut v = vec![0i128; cells.max(1)];
        let mut rest = counter;
        for cell in v.iter_mut().take(cells) {
            let d = (rest % base as u128) as u64;
            rest /= base as u128;
            *cell = i128::from(digit_value(d));
        }
        if pin_v && (cells != 1 || v[0] != 1) {
            return Vec::new();
        }
        let detv = det_i128(&v, n);
        if detv != 1 && detv != -1 {
            return Vec::new();
        }
        if require_sl && detv != 1 {
            return Vec::new();
        }
        // W = V^{-1} = adj(V) * detv.
        let mut w = adjugate_i128(&v, n);
        for x in w.iter_mut() {
            *x *= detv;
        }
        // B1 V (m x n).
        let mut b1v = vec![0i128; m * n];
        for r in 0..m {
            for c in 0..n {
                let mut acc = 0i128;
                for k in 0..n {
                    acc += b1s[r * n + k] * v[k * n + c];
                }
                b1v[r * n + c] = acc;
            }
        }
        // All bounded U (m x m) with U (B1 V) = B2, in canonical order.
        let us = solve_left_factors(&b1v, &b2s, m, n, budget, require_sl, U_CAP as usize);
        let wmat = imat_from_i64(n, n, &w.iter().map(|&x| x as i64).collect::<Vec<_>>());
        us.into_iter()
            .enumerate()
            .map(|(idx, u)| DiagCandidate {
                key: counter * U_CAP + idx as u128,
                u: imat_from_i64(m, m, &u.iter().map(|&x| x as i64).collect::<Vec<_>>()),
                w: wmat.clone(),
            })
            .collect()
    };

    let mut found = scan_counters(total, deadline, eval);
    found.sort_by_key(|c| c.key);
    found
}

/// Scan the counter space, in parallel when the feature is enabled.
#[cfg(feature = "parallel")]
fn scan_counters<F>(total: u128, deadline: Option<Instant>, eval: F) -> Vec<DiagCandidate>
where
    F: Fn(u128) -> Vec<DiagCandidate> + Sync,
{
    scan_counters_par(total, deadline, &eval)
}

#[cfg(not(feature = "parallel"))]
fn scan_counters<F>(total: u128, deadline: Option<Instant>, eval: F) -> Vec<DiagCandidate>
where
    F: Fn(u128) -> Vec<DiagCandidate> + Sync,
{
    scan_counters_seq(total, deadline, &eval)
}

/// Sequential counter scan; used directly by benchmarks.
pub(crate) fn scan_counters_seq<F>(
    total: u128,
    deadline: Option<Instant>,
    eval: &F,
) -> Vec<DiagCandidate>
where
    F: Fn(u128) -> Vec<DiagCandidate> + Sync,
{
    let mut out = Vec::new();
    let mut counter = 0u128;
    while counter < total {
        if let Some(d) = deadline {
            if counter % 4096 == 0 && Instant::now() > d {
                break;
            }
        }
        out.extend(eval(counter));
        counter += 1;
    }
    out
}

/// Parallel counter scan over fixed-size chunks.
#[cfg(feature = "parallel")]
pub(crate) fn scan_counters_par<F>(
    total: u128,
    deadline: Option<Instant>,
    eval: &F,
) -> Vec<DiagCandidate>
where
    F: Fn(u128) -> Vec<DiagCandidate> + Sync,
{
    const CHUNK: u128 = 1 << 16;
    let chunks = total.div_ceil(CHUNK);
    let chunks_usize = usize::try_from(chunks.min(u128::from(u64::MAX))).unwrap_or(usize::MAX);
    (0..chunks_usize)
        .into_par_iter()
        .flat_map_iter(|chunk| {
            let lo = chunk as u128 * CHUNK;
            let hi = (lo + CHUNK).min(total);
            let mut local = Vec::new();
            if deadline.is_some_and(|d| Instant::now() > d) {
                return local.into_iter();
            }
            let mut counter = lo;
            while counter < hi {
                local.extend(eval(counter));
                counter += 1;
            }
            local.into_iter()
        })
        .collect()
}

/// Canonical ordering key for entry values: 0, 1, -1, 2, -2, ...
fn value_key(x: i128) -> u128 {
    let a = x.unsigned_abs() as u128;
    if x > 0 {
        2 * a - 1
    } else {
        2 * a
    }
}

fn vec_key(v: &[i128]) -> Vec<u128> {
    v.iter().map(|&x| value_key(x)).collect()
}

/// All integer solutions `U` of `U * K = T` (`K`, `T` are `m x n`, `U` is
/// `m x m`) with entries bounded and `|det U| = 1` (`det = 1` when
/// `require_sl`), sorted canonically, truncated at `cap`.
fn solve_left_factors(
    k: &[i128],
    t: &[i128],
    m: usize,
    n: usize,
    budget: u32,
    require_sl: bool,
    cap: usize,
) -> Vec<Vec<i128>> {
    let bound = i128::from(budget);
    let detk = if m == n { det_i128(k, n) } else { 0 };
    if m == n && detk != 0 {
        // Unique rational solution U = T adj(K) / det.
        let adj = adjugate_i128(k, n);
        let mut u = vec![0i128; m * m];
        for r in 0..m {
            for c in 0..m {
                let mut acc = 0i128;
                for s in 0..n {
                    acc += t[r * n + s] * adj[s * n + c];
                }
                if acc % detk != 0 {
                    return Vec::new();
                }
                let q = acc / detk;
                if q.abs() > bound {
                    return Vec::new();
                }
                u[r * m + c] = q;
            }
        }
        let detu = det_i128(&u, m);
        if detu != 1 && (require_sl || detu != -1) {
            return Vec::new();
        }
        return vec![u];
    }
    // Rank-deficient or rectangular: per-row lattice enumeration.
    // Row r solves x^T K = t_r, i.e. K^T x = t_r.
    let kt = {
        let mut out = IMat::zero(n, m);
        for r in 0..n {
            for c in 0..m {
                out.set(r, c, BigInt::from(k[c * n + r]));
            }
        }
        out
    };
    let ker = kernel(&kt);
    let basis = echelonize(&ker.basis, m);
    let mut row_options: Vec<Vec<Vec<i128>>> = Vec::with_capacity(m);
    for r in 0..m {
        let rhs: Vec<BigInt> = (0..n).map(|c| BigInt::from(t[r * n + c])).collect();
        let Some(x0) = solve_integer(&kt, &rhs) else {
            return Vec::new();
        };
        let Some(mut opts) = lattice_points_in_box(&x0, &basis, bound) else {
            return Vec::new();
        };
        if opts.is_empty() {
            return Vec::new();
        }
        opts.sort_by_key(|v| vec_key(v));
        row_options.push(opts);
    }
    // Assemble rows in canonical order, keeping determinant-one solutions.
    let mut out = Vec::new();
    let mut pick = vec![0usize; m];
    loop {
        let mut u = vec![0i128; m * m];
        for r in 0..m {
            u[r * m..(r + 1) * m].copy_from_slice(&row_options[r][pick[r]]);
        }
        let detu = det_i128(&u, m);
        if detu == 1 || (!require_sl && detu == -1) {
            out.push(u);
            if out.len() >= cap {
                break;
            }
        }
        // Next combination.
        let mut lvl = m;
        let done = loop {
            if lvl == 0 {
                break true;
            }
            lvl -= 1;
            pick[lvl] += 1;
            if pick[lvl] < row_options[lvl].len() {
                break false;
            }
            pick[lvl] = 0;
        };
        if done {
            break;
        }
    }
    out
}

/// Column-echelon form of a lattice basis (column operations only, so the
/// span is unchanged): returns vectors with strictly increasing pivot rows.
fn echelonize(basis: &[Vec<BigInt>], dim: usize) -> Vec<Vec<BigInt>> {
    let mut cols: Vec<Vec<BigInt>> = basis.to_vec();
    let mut out: Vec<Vec<BigInt>> = Vec::new();
    let mut row = 0usize;
    while row < dim && !cols.is_empty() {
        // Reduce all columns against each other at this row via gcd steps.
        loop {
            let nonzero: Vec<usize> = (0..cols.len())
                .filter(|&c| !cols[c][row].is_zero())
                .collect();
            if nonzero.len() <= 1 {
                break;
            }
            // Find the smallest absolute entry and reduce the others.
            let piv = *nonzero
                .iter()
                .min_by_key(|&&c| cols[c][row].abs())
                .unwrap();
            let pv = cols[piv][row].clone();
            let mut changed = false;
            for &c in &nonzero {
                if c == piv {
                    continue;
                }
                let q = cols[c][row].clone() / &pv;
                if !q.is_zero() {
                    for r in 0..dim {
                        let x = cols[c][r].clone() - &q * &cols[piv][r];
                        cols[c][r] = x;
                    }
                    changed = true;
                }
                if !cols[c][row].is_zero() {
                    // Remainder smaller than pivot; swap roles next pass.
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if let Some(c) = (0..cols.len()).find(|&c| !cols[c][row].is_zero()) {
            out.push(cols.remove(c));
        }
        row += 1;
    }
    out
}

/// All lattice points `x0 + span(basis)` with every entry within `bound`,
/// via interval propagation on the echelonized basis. Returns `None` when
/// the enumeration would be unbounded (never for a genuine echelon basis).
fn lattice_points_in_box(
    x0: &[BigInt],
    basis: &[Vec<BigInt>],
    bound: i128,
) -> Option<Vec<Vec<i128>>> {
    let dim = x0.len();
    let mut out = Vec::new();
    // Pivot rows of the echelon basis.
    let mut pivots = Vec::with_capacity(basis.len());
    for b in basis {
        let p = (0..dim).find(|&r| !b[r].is_zero())?;
        pivots.push(p);
    }
    fn rec(
        x: &mut Vec<BigInt>,
        basis: &[Vec<BigInt>],
        pivots: &[usize],
        level: usize,
        bound: i128,
        out: &mut Vec<Vec<i128>>,
    ) {
        if level == basis.len() {
            let mut pt = Vec::with_capacity(x.len());
            for v in x.iter() {
                let Ok(v) = i128::try_from(v) else { return };
                if v.abs() > bound {
                    return;
                }
                pt.push(v);
            }
            out.push(pt);
            return;
        }
        let p = pivots[level];
        let coef = &basis[level][p];
        // |x[p] + t*coef| <= bound gives a t interval.
        let lo_num = -BigInt::from(bound) - &x[p];
        let hi_num = BigInt::from(bound) - &x[p];
        let (tlo, thi) = if coef.is_positive() {
            (div_ceil_big(&lo_num, coef), div_floor_big(&hi_num, coef))
        } else {
            (div_ceil_big(&hi_num, coef), div_floor_big(&lo_num, coef))
        };
        let mut t = tlo;
        while t <= thi {
            let tb = BigInt::from(t);
            for r in 0..x.len() {
                let nx = x[r].clone() + &tb * &basis[level][r];
                x[r] = nx;
            }
            rec(x, basis, pivots, level + 1, bound, out);
            for r in 0..x.len() {
                let nx = x[r].clone() - &tb * &basis[level][r];
                x[r] = nx;
            }
            t += 1;
        }
    }
    let mut x = x0.to_vec();
    rec(&mut x, basis, &pivots, 0, bound, &mut out);
    Some(out)
}

fn div_floor_big(a: &BigInt, b: &BigInt) -> i128 {
    use num_integer::Integer;
    i128::try_from(&a.div_floor(b)).unwrap_or(if b.is_positive() { i128::MAX } else { i128::MIN })
}

fn div_ceil_big(a: &BigInt, b: &BigInt) -> i128 {
    use num_integer::Integer;
    let f = a.div_floor(b);
    let exact = (a - &f * b).is_zero();
    let v = i128::try_from(&f).unwrap_or(i128::MAX / 2);
    if exact {
        v
    } else {
        v + 1
    }
}

/// Count the admissible diagonal candidates for one block pair, forcing
/// the sequential scan when asked; the benchmark suite compares the two.
pub fn count_block_candidates(b1: &IMat, b2: &IMat, budget: u32, force_seq: bool) -> usize {
    let m = b1.rows();
    let n = b1.cols();
    let base = 2 * u64::from(budget) + 1;
    let cells = n * n;
    let total: u128 = (0..cells).fold(1u128, |acc, _| acc.saturating_mul(base as u128));
    let (Some(b1s), Some(b2s)) = (imat_to_i128(b1), imat_to_i128(b2)) else {
        return 0;
    };
    const U_CAP: u128 = 1 << 12;
    let eval = move |counter: u128| -> Vec<DiagCandidate> {
        let mut v = vec![0i128; cells.max(1)];
        let mut rest = counter;
        for cell in v.iter_mut().take(cells) {
            let d = (rest % base as u128) as u64;
            rest /= base as u128;
            *cell = i128::from(digit_value(d));
        }
        let detv = det_i128(&v, n);
        if detv != 1 && detv != -1 {
            return Vec::new();
        }
        let mut w = adjugate_i128(&v, n);
        for x in w.iter_mut() {
            *x *= detv;
        }
        let mut b1v = vec![0i128; m * n];
        for r in 0..m {
            for c in 0..n {
                let mut acc = 0i128;
                for k in 0..n {
                    acc += b1s[r * n + k] * v[k * n + c];
                }
                b1v[r * n + c] = acc;
            }
        }
        let us = solve_left_factors(&b1v, &b2s, m, n, budget, false, U_CAP as usize);
        let wmat = imat_from_i64(n, n, &w.iter().map(|&x| x as i64).collect::<Vec<_>>());
        us.into_iter()
            .enumerate()
            .map(|(idx, u)| DiagCandidate {
                key: counter * U_CAP + idx as u128,
                u: imat_from_i64(m, m, &u.iter().map(|&x| x as i64).collect::<Vec<_>>()),
                w: wmat.clone(),
            })
            .collect()
    };
    if force_seq {
        scan_counters_seq(total, None, &eval).len()
    } else {
        scan_counters(total, None, eval).len()
    }
}

/// Bounded search for a block equivalence from `b1` to `b2`.
pub fn lift_iso_bounded(
    b1: &BlockMatrix,
    b2: &BlockMatrix,
    constraints: &LiftConstraints,
    budget: u32,
) -> LiftOutcome {
    lift_iso_bounded_with(b1, b2, constraints, budget, |_| true)
}

/// Bounded search accepting only witnesses passing a caller predicate;
/// rejected candidates make the search continue in enumeration order.
pub fn lift_iso_bounded_with(
    b1: &BlockMatrix,
    b2: &BlockMatrix,
    constraints: &LiftConstraints,
    budget: u32,
    accept: impl Fn(&EquivWitness) -> bool,
) -> LiftOutcome {
    assert_eq!(b1.poset, b2.poset, "posets must agree");
    assert_eq!(b1.row_idx, b2.row_idx, "row multiindices must agree");
    assert_eq!(b1.col_idx, b2.col_idx, "column multiindices must agree");
    let k = b1.block_count();

    // Identity first.
    if b1.mat == b2.mat {
        let id = EquivWitness::identity(&b1.poset, &b1.row_idx, &b1.col_idx);
        if accept(&id) {
            return LiftOutcome::Found(id);
        }
    }

    // Per-block Smith prefilter: equal diagonal blocks up to equivalence.
    for i in 0..k {
        let f1 = smith_normal_form(&b1.diag_block(i)).factors;
        let f2 = smith_normal_form(&b2.diag_block(i)).factors;
        if f1 != f2 {
            return LiftOutcome::Exhausted;
        }
    }

    // Diagonal candidates per block.
    let mut cands: Vec<Vec<DiagCandidate>> = Vec::with_capacity(k);
    for i in 0..k {
        let list = if constraints.pin_identity_outside.is_some_and(|j| j != i) {
            if b1.diag_block(i) == b2.diag_block(i) {
                let m = b1.row_idx[i];
                let n = b1.col_idx[i];
                vec![DiagCandidate { key: 0, u: IMat::identity(m), w: IMat::identity(n) }]
            } else {
                Vec::new()
            }
        } else {
            block_candidates(
                &b1.diag_block(i),
                &b2.diag_block(i),
                budget,
                constraints.pin_v_one.contains(&i),
                constraints.require_sl,
                constraints.deadline,
            )
        };
        if list.is_empty() {
            return LiftOutcome::Exhausted;
        }
        cands.push(list);
    }

    // Iterate diagonal combinations in lexicographic key order.
    let mut pick = vec![0usize; k];
    loop {
        if constraints.deadline.is_some_and(|d| Instant::now() > d) {
            return LiftOutcome::Exhausted;
        }
        let chosen: Vec<&DiagCandidate> = (0..k).map(|i| &cands[i][pick[i]]).collect();
        if let Some(w) = try_combination(b1, b2, &chosen, constraints) {
            if accept(&w) {
                return LiftOutcome::Found(w);
            }
        }
        // Advance.
        let mut lvl = k;
        loop {
            if lvl == 0 {
                return LiftOutcome::Exhausted;
            }
            lvl -= 1;
            pick[lvl] += 1;
            if pick[lvl] < cands[lvl].len() {
                break;
            }
            pick[lvl] = 0;
        }
    }
}

/// Given fixed diagonal blocks, solve the linear system `U B1 = B2 W` for
/// the off-diagonal entries and assemble a verified witness.
fn try_combination(
    b1: &BlockMatrix,
    b2: &BlockMatrix,
    chosen: &[&DiagCandidate],
    constraints: &LiftConstraints,
) -> Option<EquivWitness> {
    let k = b1.block_count();
    let total_m: usize = b1.row_idx.iter().sum();
    let total_n: usize = b1.col_idx.iter().sum();

    // Embed the diagonal choices.
    let mut u = IMat::zero(total_m, total_m);
    let mut w = IMat::zero(total_n, total_n);
    for i in 0..k {
        let rr: Vec<usize> = b1.row_range(i).collect();
        let cc: Vec<usize> = b1.col_range(i).collect();
        for (a, &r) in rr.iter().enumerate() {
            for (b, &r2) in rr.iter().enumerate() {
                u.set(r, r2, chosen[i].u.get(a, b).clone());
            }
        }
        for (a, &c) in cc.iter().enumerate() {
            for (b, &c2) in cc.iter().enumerate() {
                w.set(c, c2, chosen[i].w.get(a, b).clone());
            }
        }
    }

    if constraints.pin_identity_outside.is_some() {
        // Off-diagonal entries are forced to zero: verify directly.
        if u.mul(&b1.mat) != b2.mat.mul(&w) {
            return None;
        }
        return assemble(b1, b2, u, w);
    }

    // Unknowns: U entries in blocks (i,k) with i ≺ k, W entries in blocks
    // (l,j) with l ≺ j.
    let row_block: Vec<usize> = (0..total_m).map(|r| b1.row_block_of(r)).collect();
    let col_block: Vec<usize> = (0..total_n).map(|c| b1.col_block_of(c)).collect();
    let mut u_var: Vec<Vec<Option<usize>>> = vec![vec![None; total_m]; total_m];
    let mut w_var: Vec<Vec<Option<usize>>> = vec![vec![None; total_n]; total_n];
    let mut nvars = 0usize;
    for r in 0..total_m {
        for s in 0..total_m {
            if b1.poset.lt(row_block[r], row_block[s]) {
                u_var[r][s] = Some(nvars);
                nvars += 1;
            }
        }
    }
    for t in 0..total_n {
        for c in 0..total_n {
            if b1.poset.lt(col_block[t], col_block[c]) {
                w_var[t][c] = Some(nvars);
                nvars += 1;
            }
        }
    }
    // Equations: entries (r, c) with block(r) ≺ block(c).
    let mut rows: Vec<Vec<BigInt>> = Vec::new();
    let mut rhs: Vec<BigInt> = Vec::new();
    for r in 0..total_m {
        for c in 0..total_n {
            if !b1.poset.lt(row_block[r], col_block[c]) {
                continue;
            }
            let mut coeffs = vec![BigInt::zero(); nvars];
            let mut constant = BigInt::zero();
            for s in 0..total_m {
                let b1v = b1.mat.get(s, c);
                if b1v.is_zero() {
                    continue;
                }
                match u_var[r][s] {
                    Some(ix) => coeffs[ix] += b1v,
                    None => constant += u.get(r, s) * b1v,
                }
            }
            for t in 0..total_n {
                let b2v = b2.mat.get(r, t);
                if b2v.is_zero() {
                    continue;
                }
                match w_var[t][c] {
                    Some(ix) => coeffs[ix] -= b2v,
                    None => constant -= b2v * w.get(t, c),
                }
            }
            rows.push(coeffs);
            rhs.push(-constant);
        }
    }
    let mut sys = IMat::zero(rows.len(), nvars);
    for (r, row) in rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            if !v.is_zero() {
                sys.set(r, c, v.clone());
            }
        }
    }
    let sol = solve_integer(&sys, &rhs)?;
    for r in 0..total_m {
        for s in 0..total_m {
            if let Some(ix) = u_var[r][s] {
                u.set(r, s, sol[ix].clone());
            }
        }
    }
    for t in 0..total_n {
        for c in 0..total_n {
            if let Some(ix) = w_var[t][c] {
                w.set(t, c, sol[ix].clone());
            }
        }
    }
    debug_assert_eq!(u.mul(&b1.mat), b2.mat.mul(&w));
    assemble(b1, b2, u, w)
}

fn assemble(b1: &BlockMatrix, b2: &BlockMatrix, u: IMat, w: IMat) -> Option<EquivWitness> {
    let v = w.inverse_unimodular();
    let witness = EquivWitness {
        u: BlockMatrix::new(b1.poset.clone(), b1.row_idx.clone(), b1.row_idx.clone(), u),
        v: BlockMatrix::new(b1.poset.clone(), b1.col_idx.clone(), b1.col_idx.clone(), v),
    };
    match verify_equiv(&witness.u, b1, &witness.v, b2) {
        Ok(rep) => match rep.verdict {
            EquivVerdict::Slp | EquivVerdict::Glp => Some(witness),
            EquivVerdict::Neither { .. } => None,
        },
        Err(BlockError::Dimension(_)) => None,
    }
}

impl EquivWitness {
    /// Per-block determinants of `U` (None on empty blocks).
    pub fn u_dets(&self) -> Vec<Option<BigInt>> {
        (0..self.u.block_count())
            .map(|i| {
                if self.u.row_idx[i] == 0 {
                    None
                } else {
                    Some(self.u.diag_block(i).det())
                }
            })
            .collect()
    }

    pub fn v_dets(&self) -> Vec<Option<BigInt>> {
        (0..self.v.block_count())
            .map(|i| {
                if self.v.row_idx[i] == 0 {
                    None
                } else {
                    Some(self.v.diag_block(i).det())
                }
            })
            .collect()
    }

    /// True when every nonempty diagonal determinant is +1.
    pub fn is_slp(&self) -> bool {
        self.u_dets()
            .iter()
            .chain(self.v_dets().iter())
            .all(|d| d.as_ref().is_none_or(|x| x.is_one()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::PosetP;

    fn chain_poset(n: usize) -> PosetP {
        let mut leq = vec![vec![false; n]; n];
        for a in 0..n {
            for b in a..n {
                leq[a][b] = true;
            }
        }
        PosetP { n, leq }
    }

    fn single(m: IMat) -> BlockMatrix {
        BlockMatrix::new(chain_poset(1), vec![m.rows()], vec![m.cols()], m)
    }

    #[test]
    fn identity_found_at_zero_budget() {
        let b = single(IMat::from_rows_i64(&[&[0, 1], &[1, 0]]));
        let out = lift_iso_bounded(&b, &b, &LiftConstraints::default(), 0);
        let w = out.witness().expect("identity must be found");
        assert!(w.u.mat.is_identity());
        assert!(w.v.mat.is_identity());
    }

    #[test]
    fn prefilter_rejects_different_cokernels() {
        let b1 = single(IMat::from_rows_i64(&[&[2]]));
        let b2 = single(IMat::from_rows_i64(&[&[3]]));
        let out = lift_iso_bounded(&b1, &b2, &LiftConstraints::default(), 3);
        assert!(out.witness().is_none());
    }

    #[test]
    fn finds_single_block_equivalence() {
        // B2 = U B1 V for a known small pair.
        let b1 = IMat::from_rows_i64(&[&[1, 1, 1], &[1, 2, 1], &[1, 1, 2]]);
        let u = IMat::from_rows_i64(&[&[1, 1, 0], &[0, 1, 0], &[0, 0, 1]]);
        let v = IMat::from_rows_i64(&[&[1, 0, 0], &[1, 1, 0], &[0, 0, 1]]);
        let b2 = u.mul(&b1).mul(&v);
        let out = lift_iso_bounded(
            &single(b1.clone()),
            &single(b2.clone()),
            &LiftConstraints::default(),
            2,
        );
        let w = out.witness().expect("equivalence must be found");
        assert_eq!(w.u.mat.mul(&b1).mul(&w.v.mat), b2);
    }

    #[test]
    fn respects_pinned_blocks() {
        // Two 1x1 blocks in a chain; B1, B2 differ by a sign that only an
        // unpinned V could absorb, so pinning forces the U side.
        let poset = chain_poset(2);
        let b1 = BlockMatrix::new(
            poset.clone(),
            vec![1, 1],
            vec![1, 1],
            IMat::from_rows_i64(&[&[0, 2], &[0, 0]]),
        );
        let b2 = BlockMatrix::new(
            poset.clone(),
            vec![1, 1],
            vec![1, 1],
            IMat::from_rows_i64(&[&[0, -2], &[0, 0]]),
        );
        let constraints = LiftConstraints {
            pin_v_one: vec![0, 1],
            ..Default::default()
        };
        let out = lift_iso_bounded(&b1, &b2, &constraints, 2);
        let w = out.witness().expect("sign flip on U side");
        assert!(w.v.mat.is_identity());
        assert_eq!(w.u.mat.get_i64(0, 0) * 2, -2 * w.v.mat.get_i64(1, 1));
    }

    #[test]
    fn off_diagonal_solving_two_blocks() {
        // A nontrivial off-diagonal correction is required.
        let poset = chain_poset(2);
        let mk = |m: IMat| BlockMatrix::new(poset.clone(), vec![2, 2], vec![2, 2], m);
        let b1 = mk(IMat::from_rows_i64(&[
            &[1, 1, 2, 0],
            &[1, 2, 0, 1],
            &[0, 0, 1, 1],
            &[0, 0, 1, 2],
        ]));
        // U with an off-diagonal block, V with one too.
        let u = IMat::from_rows_i64(&[
            &[1, 0, 1, 0],
            &[0, 1, 0, 0],
            &[0, 0, 1, 0],
            &[0, 0, 0, 1],
        ]);
        let v = IMat::from_rows_i64(&[
            &[1, 0, 0, 1],
            &[0, 1, 0, 0],
            &[0, 0, 1, 0],
            &[0, 0, 0, 1],
        ]);
        let b2m = u.mul(&b1.mat).mul(&v);
        let b2 = mk(b2m.clone());
        let out = lift_iso_bounded(&b1, &b2, &LiftConstraints::default(), 2);
        let w = out.witness().expect("two-block equivalence must be found");
        assert_eq!(w.u.mat.mul(&b1.mat).mul(&w.v.mat), b2m);
    }

    #[test]
    fn rank_deficient_block_search() {
        // Singular diagonal block: the per-row lattice path must engage.
        let b1 = IMat::from_rows_i64(&[&[1, 1, 1], &[1, 1, 1], &[1, 1, 2]]);
        let u = IMat::from_rows_i64(&[&[1, 0, 0], &[1, 1, 0], &[0, 1, 1]]);
        let v = IMat::from_rows_i64(&[&[1, 0, 1], &[0, 1, 0], &[0, 0, 1]]);
        let b2 = u.mul(&b1).mul(&v);
        let out = lift_iso_bounded(
            &single(b1.clone()),
            &single(b2.clone()),
            &LiftConstraints::default(),
            2,
        );
        let w = out.witness().expect("rank-2 equivalence must be found");
        assert_eq!(w.u.mat.mul(&b1).mul(&w.v.mat), b2);
    }

    #[test]
    fn deterministic_result() {
        let b1 = IMat::from_rows_i64(&[&[1, 1, 1], &[1, 2, 1], &[1, 1, 2]]);
        let u = IMat::from_rows_i64(&[&[1, 1, 0], &[0, 1, 0], &[0, 0, 1]]);
        let b2 = u.mul(&b1);
        let run = || {
            lift_iso_bounded(
                &single(b1.clone()),
                &single(b2.clone()),
                &LiftConstraints::default(),
                2,
            )
        };
        let w1 = run();
        let w2 = run();
        assert_eq!(
            w1.witness().unwrap().u.mat,
            w2.witness().unwrap().u.mat
        );
        assert_eq!(
            w1.witness().unwrap().v.mat,
            w2.witness().unwrap().v.mat
        );
    }
}
