//! The reduced K-web of a block matrix, the reduced filtered K-theory
//! invariant with order tags and unit class, isomorphisms induced by block
//! equivalences, and the move-invariance fingerprint.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocks::{BlockMatrix, BlockedGraphForm, EquivWitness};
use crate::intmat::{cokernel, kernel, solve_integer, FGAbPresentation, IMat, LatticeBasis};
use crate::structure::{ComponentKind, PosetP};

/// The convex index sets the K-web is built over.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvexSets {
    /// `r_i = { j : j ≺ i }` per index.
    pub r: Vec<Vec<usize>>,
    /// `s_i = { j : j ⪯ i }` per index.
    pub s: Vec<Vec<usize>>,
    /// All distinct members of `I_0`, sorted.
    pub i0: Vec<Vec<usize>>,
    /// `I_1 = { i : r_i nonempty }`.
    pub i1: Vec<usize>,
}

pub fn convex_sets(poset: &PosetP) -> ConvexSets {
    let n = poset.n;
    let r: Vec<Vec<usize>> = (0..n).map(|i| poset.strictly_below(i)).collect();
    let s: Vec<Vec<usize>> = (0..n).map(|i| poset.below(i)).collect();
    let mut i0: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        if !r[i].is_empty() {
            i0.push(r[i].clone());
        }
        i0.push(s[i].clone());
        i0.push(vec![i]);
    }
    i0.sort();
    i0.dedup();
    let i1: Vec<usize> = (0..n).filter(|&i| !r[i].is_empty()).collect();
    ConvexSets { r, s, i0, i1 }
}

/// A four-term piece of the K-web with concrete connecting matrices:
/// `ker B{i} -> cok B{r_i} -> cok B{s_i} -> cok B{i}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WebSequence {
    pub index: usize,
    /// Connecting map `ker B{i} -> cok B{r_i}`: the submatrix `B{r_i, i}`.
    pub boundary: IMat,
    /// Inclusion `cok B{r_i} -> cok B{s_i}` (coordinate embedding).
    pub include: IMat,
    /// Projection `cok B{s_i} -> cok B{i}` (coordinate projection).
    pub project: IMat,
}

/// Inclusion map `cok B{s_j} -> cok B{r_i}` for immediate predecessors.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WebImmMap {
    pub from: usize,
    pub to: usize,
    pub include: IMat,
}

/// The K-web of a block matrix: cokernels over `I_0`, kernels over `I_1`,
/// and the connecting homomorphisms.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KWeb {
    pub sets: ConvexSets,
    pub cokernels: BTreeMap<Vec<usize>, FGAbPresentation>,
    pub kernels: BTreeMap<usize, LatticeBasis>,
    pub sequences: Vec<WebSequence>,
    pub imm_maps: Vec<WebImmMap>,
}

#[derive(Debug, Error)]
pub enum KWebError {
    #[error("exactness failed at {place} for index {index}")]
    Exactness { index: usize, place: &'static str },
    #[error("ladder square does not commute at {0}")]
    Ladder(String),
    #[error("witness does not verify")]
    BadWitness,
}

/// Rows of the full matrix belonging to the blocks of `set`.
fn rows_of(b: &BlockMatrix, set: &[usize]) -> Vec<usize> {
    set.iter().flat_map(|&i| b.row_range(i)).collect()
}

fn cols_of(b: &BlockMatrix, set: &[usize]) -> Vec<usize> {
    set.iter().flat_map(|&j| b.col_range(j)).collect()
}

/// Coordinate inclusion matrix for `small ⊆ big` (row index spaces).
fn inclusion_matrix(big: &[usize], small: &[usize]) -> IMat {
    let mut m = IMat::zero(big.len(), small.len());
    for (c, x) in small.iter().enumerate() {
        let r = big.iter().position(|y| y == x).expect("subset inclusion");
        m.set_i64(r, c, 1);
    }
    m
}

/// Coordinate projection matrix from `big` onto `small ⊆ big`.
fn projection_matrix(big: &[usize], small: &[usize]) -> IMat {
    inclusion_matrix(big, small).transpose()
}

/// Is the subgroup of `cok` generated by `a`-columns contained in the one
/// generated by `b`-columns?
fn subgroup_contained(cok: &FGAbPresentation, a: &IMat, b: &IMat) -> bool {
    let rows = cok.presentation.rows();
    let mut aug = IMat::zero(rows, b.cols() + cok.presentation.cols());
    for r in 0..rows {
        for c in 0..b.cols() {
            aug.set(r, c, b.get(r, c).clone());
        }
        for c in 0..cok.presentation.cols() {
            aug.set(r, b.cols() + c, cok.presentation.get(r, c).clone());
        }
    }
    (0..a.cols()).all(|c| solve_integer(&aug, &a.col(c)).is_some())
}

/// Build the K-web, validating exactness of every four-term sequence.
pub fn kweb(b: &BlockMatrix) -> Result<KWeb, KWebError> {
    let sets = convex_sets(&b.poset);
    let mut cokernels = BTreeMap::new();
    for c in &sets.i0 {
        cokernels.insert(c.clone(), cokernel(&b.principal(c)));
    }
    let mut kernels = BTreeMap::new();
    for &i in &sets.i1 {
        kernels.insert(i, kernel(&b.diag_block(i)));
    }
    let mut sequences = Vec::new();
    for &i in &sets.i1 {
        let r_set = &sets.r[i];
        let s_set = &sets.s[i];
        let boundary = b.mat.submatrix(&rows_of(b, r_set), &cols_of(b, &[i]));
        let include = inclusion_matrix(&rows_of(b, s_set), &rows_of(b, r_set));
        let project = projection_matrix(&rows_of(b, s_set), &rows_of(b, &[i]));
        // Exactness at cok B{r_i}: image of the boundary равно kernel of the
        // inclusion, i.e. preimage of im B{s_i} under the inclusion.
        let cok_r = &cokernels[r_set];
        let cok_s = &cokernels[s_set];
        let ker_i = &kernels[&i];
        // Generators of ker(include): x with include(x) ∈ im B{s_i}.
        let ker_incl = map_kernel_into(cok_s, &include, cok_r.presentation.rows());
        let im_boundary = {
            let mut m = IMat::zero(cok_r.presentation.rows(), ker_i.basis.len());
            for (c, v) in ker_i.basis.iter().enumerate() {
                let img = boundary.mul_vec(v);
                for (r, val) in img.into_iter().enumerate() {
                    m.set(r, c, val);
                }
            }
            m
        };
        if !subgroup_contained(cok_r, &im_boundary, &ker_incl)
            || !subgroup_contained(cok_r, &ker_incl, &im_boundary)
        {
            return Err(KWebError::Exactness { index: i, place: "cok of the open piece" });
        }
        // Exactness at cok B{s_i}: image of include equals kernel of project.
        let cok_i = &cokernels[&vec![i]];
        let ker_proj = map_kernel_into(cok_i, &project, cok_s.presentation.rows());
        let im_incl = include.clone();
        if !subgroup_contained(cok_s, &im_incl, &ker_proj)
            || !subgroup_contained(cok_s, &ker_proj, &im_incl)
        {
            return Err(KWebError::Exactness { index: i, place: "cok of the closed piece" });
        }
        sequences.push(WebSequence { index: i, boundary, include, project });
    }
    let mut imm_maps = Vec::new();
    for i in 0..b.poset.n {
        let imm = b.poset.immediate_predecessors(i);
        if imm.len() < 2 {
            continue;
        }
        for &j in &imm {
            let include = inclusion_matrix(&rows_of(b, &sets.r[i]), &rows_of(b, &sets.s[j]));
            imm_maps.push(WebImmMap { from: j, to: i, include });
        }
    }
    Ok(KWeb { sets, cokernels, kernels, sequences, imm_maps })
}

/// Generators (columns) of the sublattice `{ x : T x ∈ im(target) }`,
/// i.e. the kernel of the induced map into `cok(target)`.
fn map_kernel_into(target: &FGAbPresentation, t: &IMat, source_rank: usize) -> IMat {
    // Solve [T | -M] z = 0 and project to the x-part.
    let rows = t.rows();
    let m = &target.presentation;
    let mut aug = IMat::zero(rows, source_rank + m.cols());
    for r in 0..rows {
        for c in 0..source_rank {
            aug.set(r, c, t.get(r, c).clone());
        }
        for c in 0..m.cols() {
            aug.set(r, source_rank + c, -m.get(r, c).clone());
        }
    }
    let ker = kernel(&aug);
    let mut out = IMat::zero(source_rank, ker.basis.len());
    for (c, v) in ker.basis.iter().enumerate() {
        for r in 0..source_rank {
            out.set(r, c, v[r].clone());
        }
    }
    out
}

/// A K-web isomorphism: per-set cokernel matrices and per-index kernel
/// matrices, with every ladder square commuting.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KWebIso {
    pub cok_maps: BTreeMap<Vec<usize>, IMat>,
    pub ker_maps: BTreeMap<usize, IMat>,
}

/// The isomorphism a block equivalence `(U, V): B -> B'` induces on the
/// K-webs: `[x] -> [U{c} x]` on cokernels and `x -> V^{-1}{i} x` on kernels.
/// Ladder commutativity is verified exactly.
pub fn induced_iso(
    witness: &EquivWitness,
    b: &BlockMatrix,
    b_prime: &BlockMatrix,
) -> Result<KWebIso, KWebError> {
    let rep = crate::blocks::verify_equiv(&witness.u, b, &witness.v, b_prime)
        .map_err(|_| KWebError::BadWitness)?;
    if matches!(rep.verdict, crate::blocks::EquivVerdict::Neither { .. }) {
        return Err(KWebError::BadWitness);
    }
    let web = kweb(b)?;
    let web2 = kweb(b_prime)?;
    let v_inv = witness.v.mat.inverse_unimodular();
    let mut cok_maps = BTreeMap::new();
    for c in &web.sets.i0 {
        let rr = rows_of(b, c);
        cok_maps.insert(c.clone(), witness.u.mat.submatrix(&rr, &rr));
    }
    let mut ker_maps = BTreeMap::new();
    for i in 0..b.poset.n {
        let cc: Vec<usize> = b.col_range(i).collect();
        ker_maps.insert(i, v_inv.submatrix(&cc, &cc));
    }
    let iso = KWebIso { cok_maps, ker_maps };
    check_ladders(&web, &web2, &iso)?;
    Ok(iso)
}

/// Verify every ladder square of a K-web isomorphism exactly.
pub fn check_ladders(web: &KWeb, web2: &KWeb, iso: &KWebIso) -> Result<(), KWebError> {
    let same_map = |target: &FGAbPresentation, a: &IMat, b: &IMat, what: &str| {
        if a.cols() != b.cols() || a.rows() != b.rows() {
            return Err(KWebError::Ladder(format!("{what}: shape mismatch")));
        }
        for c in 0..a.cols() {
            let diff: Vec<BigInt> = (0..a.rows())
                .map(|r| a.get(r, c) - b.get(r, c))
                .collect();
            if !target.is_zero_class(&diff) {
                return Err(KWebError::Ladder(what.to_string()));
            }
        }
        Ok(())
    };
    for (seq, seq2) in web.sequences.iter().zip(&web2.sequences) {
        let i = seq.index;
        let r_set = &web.sets.r[i];
        let s_set = &web.sets.s[i];
        // Boundary square: κ_{r} ∘ ∂ = ∂' ∘ δ_i on kernel basis vectors.
        let ker_basis = &web.kernels[&i].basis;
        let kr = &iso.cok_maps[r_set];
        let di = &iso.ker_maps[&i];
        let cok2_r = &web2.cokernels[r_set];
        let mut lhs = IMat::zero(kr.rows(), ker_basis.len());
        let mut rhs = IMat::zero(kr.rows(), ker_basis.len());
        for (c, v) in ker_basis.iter().enumerate() {
            let a = kr.mul_vec(&seq.boundary.mul_vec(v));
            let bb = seq2.boundary.mul_vec(&di.mul_vec(v));
            for r in 0..kr.rows() {
                lhs.set(r, c, a[r].clone());
                rhs.set(r, c, bb[r].clone());
            }
        }
        same_map(cok2_r, &lhs, &rhs, &format!("boundary square at {i}"))?;
        // Inclusion square: κ_s ∘ ι = ι' ∘ κ_r.
        let ks = &iso.cok_maps[s_set];
        let cok2_s = &web2.cokernels[s_set];
        same_map(
            cok2_s,
            &ks.mul(&seq.include),
            &seq2.include.mul(kr),
            &format!("inclusion square at {i}"),
        )?;
        // Projection square: κ_i ∘ π = π' ∘ κ_s.
        let ki = &iso.cok_maps[&vec![i]];
        let cok2_i = &web2.cokernels[&vec![i]];
        same_map(
            cok2_i,
            &ki.mul(&seq.project),
            &seq2.project.mul(ks),
            &format!("projection square at {i}"),
        )?;
    }
    for (mm, mm2) in web.imm_maps.iter().zip(&web2.imm_maps) {
        let from_s = &web.sets.s[mm.from];
        let to_r = &web.sets.r[mm.to];
        let cok2 = &web2.cokernels[to_r];
        same_map(
            cok2,
            &iso.cok_maps[to_r].mul(&mm.include),
            &mm2.include.mul(&iso.cok_maps[from_s]),
            &format!("immediate map square {}->{}", mm.from, mm.to),
        )?;
    }
    Ok(())
}

/// Order tag of a gauge simple subquotient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OrderTag {
    PurelyInfinite,
    CyclicZ,
    SingularZ,
}

/// The reduced filtered K-theory invariant of a blocked graph: the K-web of
/// the transposed-and-reversed matrix, kernels at every index, order tags,
/// and the class of the unit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReducedInvariant {
    pub c_matrix: BlockMatrix,
    pub web: KWeb,
    /// Kernels at every index of the transposed poset (the web already has
    /// those with nonempty lower set; minimal ones are added here).
    pub extra_kernels: BTreeMap<usize, LatticeBasis>,
    pub tags: Vec<OrderTag>,
    /// Coordinates of the all-ones vector, the class of the unit in the
    /// cokernel of the full matrix.
    #[serde(with = "crate::intmat::big_vec")]
    pub unit: Vec<BigInt>,
}

/// The matrix `J (B•)^T J` over the transposed poset.
pub fn c_matrix(bg: &BlockedGraphForm) -> BlockMatrix {
    let b = &bg.b_bullet;
    let k = b.block_count();
    let total_m: usize = b.row_idx.iter().sum();
    let total_n: usize = b.col_idx.iter().sum();
    let mut mat = IMat::zero(total_n, total_m);
    for r in 0..total_n {
        for c in 0..total_m {
            mat.set(r, c, b.mat.get(total_m - 1 - c, total_n - 1 - r).clone());
        }
    }
    let row_idx: Vec<usize> = (0..k).map(|i| b.col_idx[k - 1 - i]).collect();
    let col_idx: Vec<usize> = (0..k).map(|i| b.row_idx[k - 1 - i]).collect();
    BlockMatrix::new(bg.poset.transpose(), row_idx, col_idx, mat)
}

pub fn reduced_invariant(bg: &BlockedGraphForm) -> Result<ReducedInvariant, KWebError> {
    let c = c_matrix(bg);
    let web = kweb(&c)?;
    let mut extra_kernels = BTreeMap::new();
    for i in 0..c.poset.n {
        if !web.kernels.contains_key(&i) {
            extra_kernels.insert(i, kernel(&c.diag_block(i)));
        }
    }
    let k = bg.poset.n;
    let tags: Vec<OrderTag> = (0..k)
        .map(|i| match bg.kinds[k - 1 - i] {
            ComponentKind::NoncyclicScc => OrderTag::PurelyInfinite,
            ComponentKind::Cyclic => OrderTag::CyclicZ,
            ComponentKind::SingularSingleton => OrderTag::SingularZ,
        })
        .collect();
    let unit = vec![BigInt::from(1); c.mat.rows()];
    Ok(ReducedInvariant { c_matrix: c, web, extra_kernels, tags, unit })
}

/// Group data per convex set plus kernel ranks, tags and the poset: the
/// move-invariant fingerprint.
/// Isomorphism type of one group in a fingerprint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupType {
    #[serde(with = "crate::intmat::big_vec")]
    pub factors: Vec<BigInt>,
    pub free_rank: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub poset: PosetP,
    pub groups: BTreeMap<Vec<usize>, GroupType>,
    pub kernel_ranks: Vec<usize>,
    pub tags: Vec<OrderTag>,
}

pub fn fingerprint(inv: &ReducedInvariant) -> Fingerprint {
    let mut groups = BTreeMap::new();
    for (set, cok) in &inv.web.cokernels {
        groups.insert(
            set.clone(),
            GroupType { factors: cok.factors.clone(), free_rank: cok.free_rank },
        );
    }
    let n = inv.c_matrix.poset.n;
    let kernel_ranks: Vec<usize> = (0..n)
        .map(|i| {
            inv.web
                .kernels
                .get(&i)
                .map(|k| k.rank())
                .or_else(|| inv.extra_kernels.get(&i).map(|k| k.rank()))
                .unwrap_or(0)
        })
        .collect();
    Fingerprint {
        poset: inv.c_matrix.poset.clone(),
        groups,
        kernel_ranks,
        tags: inv.tags.clone(),
    }
}

/// Relabel a fingerprint along a poset bijection `perm` (new index `i` is
/// old index `perm[i]`).
fn relabel_fingerprint(fp: &Fingerprint, perm: &[usize]) -> Fingerprint {
    let n = fp.poset.n;
    let mut leq = vec![vec![false; n]; n];
    for a in 0..n {
        for b in 0..n {
            leq[a][b] = fp.poset.leq(perm[a], perm[b]);
        }
    }
    let mut groups = BTreeMap::new();
    let inv_perm: Vec<usize> = {
        let mut v = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            v[old] = new;
        }
        v
    };
    for (set, data) in &fp.groups {
        let mut new_set: Vec<usize> = set.iter().map(|&i| inv_perm[i]).collect();
        new_set.sort_unstable();
        groups.insert(new_set, data.clone());
    }
    Fingerprint {
        poset: PosetP { n, leq },
        groups,
        kernel_ranks: (0..n).map(|i| fp.kernel_ranks[perm[i]]).collect(),
        tags: (0..n).map(|i| fp.tags[perm[i]]).collect(),
    }
}

/// Do two fingerprints agree under some tag-preserving poset isomorphism?
pub fn fingerprints_equivalent(a: &Fingerprint, b: &Fingerprint) -> bool {
    let n = a.poset.n;
    if n != b.poset.n {
        return false;
    }
    let mut perm: Vec<usize> = Vec::with_capacity(n);
    let mut used = vec![false; n];
    fn rec(a: &Fingerprint, b: &Fingerprint, perm: &mut Vec<usize>, used: &mut Vec<bool>) -> bool {
        let n = a.poset.n;
        let i = perm.len();
        if i == n {
            return relabel_fingerprint(b, perm) == *a;
        }
        for j in 0..n {
            if used[j] || a.tags[i] != b.tags[j] || a.kernel_ranks[i] != b.kernel_ranks[j] {
                continue;
            }
            let ok = (0..i).all(|i2| {
                a.poset.leq(i2, i) == b.poset.leq(perm[i2], j)
                    && a.poset.leq(i, i2) == b.poset.leq(j, perm[i2])
            });
            if !ok {
                continue;
            }
            used[j] = true;
            perm.push(j);
            if rec(a, b, perm, used) {
                return true;
            }
            perm.pop();
            used[j] = false;
        }
        false
    }
    rec(a, b, &mut perm, &mut used)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::{block_form, FormLevel};
    use crate::graph::Graph;
    use crate::intmat::IMat;

    fn chain_poset(n: usize) -> PosetP {
        let mut leq = vec![vec![false; n]; n];
        for a in 0..n {
            for b in a..n {
                leq[a][b] = true;
            }
        }
        PosetP { n, leq }
    }

    fn fig1_e() -> Graph {
        Graph::from_rows(&[&[1, 1, 2], &[0, 2, 1], &[0, 0, 1]])
    }

    fn fig1_f() -> Graph {
        Graph::from_rows(&[&[1, 1, 0], &[0, 2, 1], &[0, 0, 1]])
    }

    #[test]
    fn single_block_two() {
        let b = BlockMatrix::new(
            chain_poset(1),
            vec![1],
            vec![1],
            IMat::from_rows_i64(&[&[2]]),
        );
        let web = kweb(&b).unwrap();
        assert_eq!(web.sets.i0, vec![vec![0]]);
        let cok = &web.cokernels[&vec![0]];
        assert_eq!(cok.factors, vec![BigInt::from(2)]);
        assert_eq!(cok.free_rank, 0);
        assert!(web.kernels.is_empty());
    }

    #[test]
    fn chain_of_units_all_trivial() {
        let b = BlockMatrix::new(
            chain_poset(2),
            vec![1, 1],
            vec![1, 1],
            IMat::from_rows_i64(&[&[1, 1], &[0, 1]]),
        );
        let web = kweb(&b).unwrap();
        for cok in web.cokernels.values() {
            assert!(cok.is_trivial());
        }
        assert_eq!(web.kernels[&1].rank(), 0);
    }

    #[test]
    fn fig1_invariant_blocks() {
        let (bg, _) = block_form(&fig1_e(), FormLevel::Three).unwrap();
        let inv = reduced_invariant(&bg).unwrap();
        // Diagonal blocks of C are [0], [1], [0] in transposed order.
        assert_eq!(inv.c_matrix.diag_block(0), IMat::from_rows_i64(&[&[0]]));
        assert_eq!(inv.c_matrix.diag_block(1), IMat::from_rows_i64(&[&[1]]));
        assert_eq!(inv.c_matrix.diag_block(2), IMat::from_rows_i64(&[&[0]]));
        // Cokernels of singletons: Z, 0, Z.
        assert_eq!(inv.web.cokernels[&vec![0]].free_rank, 1);
        assert!(inv.web.cokernels[&vec![1]].is_trivial());
        assert_eq!(inv.web.cokernels[&vec![2]].free_rank, 1);
        // Kernels: Z at the two cyclic blocks, 0 at the middle.
        let fp = fingerprint(&inv);
        assert_eq!(fp.kernel_ranks, vec![1, 0, 1]);
        assert_eq!(
            fp.tags,
            vec![OrderTag::CyclicZ, OrderTag::PurelyInfinite, OrderTag::CyclicZ]
        );
    }

    #[test]
    fn one_vertex_sink_and_loop() {
        let sink = Graph::from_rows(&[&[0]]);
        let (bg, _) = block_form(&sink, FormLevel::Three).unwrap();
        let inv = reduced_invariant(&bg).unwrap();
        assert_eq!(inv.tags, vec![OrderTag::SingularZ]);
        assert_eq!(inv.web.cokernels[&vec![0]].free_rank, 1);
        assert_eq!(fingerprint(&inv).kernel_ranks, vec![0]);

        let lp = Graph::from_rows(&[&[1]]);
        let (bg, _) = block_form(&lp, FormLevel::Three).unwrap();
        let inv = reduced_invariant(&bg).unwrap();
        assert_eq!(inv.tags, vec![OrderTag::CyclicZ]);
        assert_eq!(inv.web.cokernels[&vec![0]].free_rank, 1);
        assert_eq!(fingerprint(&inv).kernel_ranks, vec![1]);
    }

    #[test]
    fn fig1_pair_same_fingerprint() {
        let (bg_e, _) = block_form(&fig1_e(), FormLevel::Three).unwrap();
        let (bg_f, _) = block_form(&fig1_f(), FormLevel::Three).unwrap();
        let fe = fingerprint(&reduced_invariant(&bg_e).unwrap());
        let ff = fingerprint(&reduced_invariant(&bg_f).unwrap());
        assert!(fingerprints_equivalent(&fe, &ff));
    }

    #[test]
    fn different_torsion_distinguished() {
        let g2 = Graph::from_rows(&[&[2]]);
        let g3 = Graph::from_rows(&[&[3]]);
        let (b2, _) = block_form(&g2, FormLevel::Three).unwrap();
        let (b3, _) = block_form(&g3, FormLevel::Three).unwrap();
        let f2 = fingerprint(&reduced_invariant(&b2).unwrap());
        let f3 = fingerprint(&reduced_invariant(&b3).unwrap());
        assert!(!fingerprints_equivalent(&f2, &f3));
    }

    #[test]
    fn identity_induces_identity_iso() {
        let (bg, _) = block_form(&fig1_e(), FormLevel::Three).unwrap();
        let c = c_matrix(&bg);
        let id = EquivWitness::identity(&c.poset, &c.row_idx, &c.col_idx);
        let iso = induced_iso(&id, &c, &c).unwrap();
        for m in iso.cok_maps.values() {
            assert!(m.is_identity());
        }
    }

    #[test]
    fn neg_id_on_column_presentation() {
        // B = B' = [[3],[0]] in a single block; U = -I induces -id on
        // cok = Z/3 ⊕ Z, V = -I on the kernel side.
        let b = BlockMatrix::new(
            chain_poset(1),
            vec![2],
            vec![1],
            IMat::from_rows_i64(&[&[3], &[0]]),
        );
        let u = BlockMatrix::new(
            chain_poset(1),
            vec![2],
            vec![2],
            IMat::from_rows_i64(&[&[-1, 0], &[0, -1]]),
        );
        let v = BlockMatrix::new(
            chain_poset(1),
            vec![1],
            vec![1],
            IMat::from_rows_i64(&[&[-1]]),
        );
        let w = EquivWitness { u, v };
        let iso = induced_iso(&w, &b, &b).unwrap();
        let kappa = &iso.cok_maps[&vec![0]];
        assert_eq!(*kappa, IMat::from_rows_i64(&[&[-1, 0], &[0, -1]]));
        // Composed with itself it is the identity map on the cokernel.
        let sq = kappa.mul(kappa);
        assert!(sq.is_identity());
    }

    #[test]
    fn splice_witness_induces_web_iso() {
        let g = Graph::from_rows(&[&[2]]);
        let (bg, _) = block_form(&g, FormLevel::Three).unwrap();
        let out = crate::moves::cuntz_splice_twice_witness(&bg, 0).unwrap();
        let src = bg.b_bullet.iota_neg(&out.embedding);
        let form2 = crate::blocks::BlockedGraphForm::from_arranged_graph(
            out.graph.clone(),
            FormLevel::Three,
            bg.vertex_order.clone(),
        );
        // The witness induces a commuting K-web isomorphism.
        induced_iso(&out.witness, &src, &form2.b_bullet).unwrap();
    }
}
