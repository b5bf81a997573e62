//! Finite-dimensional C*-algebras `⊕ₖ M_{n_k}`, their (discrete) primitive
//! ideal spaces, closed covers, restrictions, and the diagonal embedding
//! `η: A → B = ⊕ᵢ A|_{F_i}`.
//!
//! Blocks carry labels from the primitive ideal space of the ambient
//! algebra. Restricting to a subset keeps the labels, so a double
//! restriction `(a|_F)|_{F∩G}` is literally `a|_{F∩G}`.

use crate::error::{Error, Result};
use crate::numlin::{norm, CMatrix, C64};

/// A subset of the primitive ideal space, kept sorted and deduplicated.
pub type BlockSet = Vec<usize>;

/// Sorts and deduplicates a list of block labels.
pub fn normalize_set(set: &[usize]) -> BlockSet {
    let mut s = set.to_vec();
    s.sort_unstable();
    s.dedup();
    s
}

/// Intersection of sorted label sets.
pub fn intersect(a: &[usize], b: &[usize]) -> BlockSet {
    a.iter().copied().filter(|k| b.binary_search(k).is_ok()).collect()
}

/// `⊕ₖ M_{n_k}`, with each block tagged by its point of `Prim A`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FdCStarAlgebra {
    labels: Vec<usize>,
    dims: Vec<usize>,
}

impl FdCStarAlgebra {
    /// The algebra `⊕ₖ M_{n_k}` with blocks labelled `0..K`.
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::invalid("algebra needs at least one block"));
        }
        let labels = (0..dims.len()).collect();
        Self::with_labels(labels, dims)
    }

    /// An algebra with explicit block labels (strictly increasing). An empty
    /// label list gives the zero algebra.
    pub fn with_labels(labels: Vec<usize>, dims: Vec<usize>) -> Result<Self> {
        if labels.len() != dims.len() {
            return Err(Error::invalid("labels and block dimensions differ in length"));
        }
        if dims.contains(&0) {
            return Err(Error::invalid("block dimensions must be positive"));
        }
        if labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("block labels must be strictly increasing"));
        }
        Ok(FdCStarAlgebra { labels, dims })
    }

    pub fn zero() -> Self {
        FdCStarAlgebra {
            labels: vec![],
            dims: vec![],
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.dims.len()
    }

    /// Points of the primitive ideal space, i.e. block labels.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Position of a label among this algebra's blocks.
    pub fn position(&self, label: usize) -> Option<usize> {
        self.labels.binary_search(&label).ok()
    }

    pub fn dim_of(&self, label: usize) -> Option<usize> {
        self.position(label).map(|p| self.dims[p])
    }

    /// Complex dimension `Σ n_k²`.
    pub fn dimension(&self) -> usize {
        self.dims.iter().map(|n| n * n).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.dims.is_empty()
    }

    /// Checks that every label of `set` is a block of this algebra.
    pub fn check_subset(&self, set: &[usize]) -> Result<()> {
        match set.iter().find(|&&k| self.position(k).is_none()) {
            Some(k) => Err(Error::invalid(format!(
                "block index {k} is not in Prim of an algebra with blocks {:?}",
                self.labels
            ))),
            None => Ok(()),
        }
    }

    /// The quotient `A|_F = A / J_F`: the blocks labelled by `F`.
    pub fn restrict(&self, set: &[usize]) -> Result<Self> {
        self.check_subset(set)?;
        let set = normalize_set(set);
        let dims = set.iter().map(|&k| self.dim_of(k).unwrap()).collect();
        Ok(FdCStarAlgebra { labels: set, dims })
    }

    /// Matrix units `(position, r, c)` in canonical order.
    pub fn matrix_units(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::with_capacity(self.dimension());
        for (p, &n) in self.dims.iter().enumerate() {
            for r in 0..n {
                for c in 0..n {
                    out.push((p, r, c));
                }
            }
        }
        out
    }
}

/// Restriction of an algebra to a closed subset of its spectrum.
pub fn restrict_algebra(a: &FdCStarAlgebra, set: &[usize]) -> Result<FdCStarAlgebra> {
    a.restrict(set)
}

/// An element of a finite-dimensional C*-algebra: one square matrix per block.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraElement {
    algebra: FdCStarAlgebra,
    blocks: Vec<CMatrix>,
}

impl AlgebraElement {
    pub fn new(algebra: FdCStarAlgebra, blocks: Vec<CMatrix>) -> Result<Self> {
        if blocks.len() != algebra.num_blocks() {
            return Err(Error::invalid(format!(
                "element has {} blocks, algebra has {}",
                blocks.len(),
                algebra.num_blocks()
            )));
        }
        for (b, &n) in blocks.iter().zip(algebra.dims()) {
            if b.shape() != (n, n) {
                return Err(Error::invalid(format!(
                    "block of shape {:?} in an M_{n} slot",
                    b.shape()
                )));
            }
            b.check_finite()?;
        }
        Ok(AlgebraElement { algebra, blocks })
    }

    pub fn zero(algebra: &FdCStarAlgebra) -> Self {
        let blocks = algebra.dims().iter().map(|&n| CMatrix::zeros(n, n)).collect();
        AlgebraElement {
            algebra: algebra.clone(),
            blocks,
        }
    }

    pub fn identity(algebra: &FdCStarAlgebra) -> Self {
        let blocks = algebra.dims().iter().map(|&n| CMatrix::identity(n)).collect();
        AlgebraElement {
            algebra: algebra.clone(),
            blocks,
        }
    }

    /// The matrix unit `E_{r,c}` in the block at position `pos`.
    pub fn unit(algebra: &FdCStarAlgebra, pos: usize, r: usize, c: usize) -> Self {
        let mut a = Self::zero(algebra);
        let n = algebra.dims()[pos];
        a.blocks[pos] = CMatrix::unit(n, n, r, c);
        a
    }

    /// Central projection onto the block at position `pos`.
    pub fn central_projection(algebra: &FdCStarAlgebra, pos: usize) -> Self {
        let mut a = Self::zero(algebra);
        a.blocks[pos] = CMatrix::identity(algebra.dims()[pos]);
        a
    }

    pub fn algebra(&self) -> &FdCStarAlgebra {
        &self.algebra
    }

    pub fn blocks(&self) -> &[CMatrix] {
        &self.blocks
    }

    /// The block with the given Prim label.
    pub fn block(&self, label: usize) -> Option<&CMatrix> {
        self.algebra.position(label).map(|p| &self.blocks[p])
    }

    fn same_algebra(&self, other: &Self) -> Result<()> {
        if self.algebra != other.algebra {
            return Err(Error::invalid("elements of different algebras"));
        }
        Ok(())
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.same_algebra(other)?;
        Ok(self.zip_with(other, |a, b| a.matmul(b)))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_algebra(other)?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_algebra(other)?;
        Ok(self.zip_with(other, |a, b| a - b))
    }

    pub fn scale(&self, s: C64) -> Self {
        self.map_blocks(|b| b.scale(s))
    }

    pub fn adjoint(&self) -> Self {
        self.map_blocks(CMatrix::adjoint)
    }

    /// C*-norm: the largest block operator norm.
    pub fn norm(&self) -> f64 {
        self.blocks.iter().map(norm).fold(0.0, f64::max)
    }

    /// Largest block-entry difference; useful for exact comparisons.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| (a - b).max_abs())
            .fold(0.0, f64::max)
    }

    pub fn restrict(&self, set: &[usize]) -> Result<Self> {
        let alg = self.algebra.restrict(set)?;
        let blocks = alg
            .labels()
            .iter()
            .map(|&k| self.block(k).unwrap().clone())
            .collect();
        Ok(AlgebraElement { algebra: alg, blocks })
    }

    fn zip_with(&self, other: &Self, f: impl Fn(&CMatrix, &CMatrix) -> CMatrix) -> Self {
        AlgebraElement {
            algebra: self.algebra.clone(),
            blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| f(a, b)).collect(),
        }
    }

    fn map_blocks(&self, f: impl Fn(&CMatrix) -> CMatrix) -> Self {
        AlgebraElement {
            algebra: self.algebra.clone(),
            blocks: self.blocks.iter().map(f).collect(),
        }
    }
}

/// The quotient map `A ↠ A|_F` on elements.
pub fn restrict_element(a: &AlgebraElement, set: &[usize]) -> Result<AlgebraElement> {
    a.restrict(set)
}

/// A finite closed cover `(F_i)` of `Prim A = {0..K}`. Since the spectrum is
/// discrete every subset is closed; empty members are allowed.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ClosedCover {
    prim_size: usize,
    sets: Vec<BlockSet>,
}

impl ClosedCover {
    pub fn new(prim_size: usize, sets: Vec<Vec<usize>>) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::invalid("cover needs at least one set"));
        }
        let sets: Vec<BlockSet> = sets.iter().map(|s| normalize_set(s)).collect();
        if let Some(k) = sets.iter().flatten().find(|&&k| k >= prim_size) {
            return Err(Error::invalid(format!(
                "cover mentions block {k} but Prim has {prim_size} points"
            )));
        }
        for k in 0..prim_size {
            if !sets.iter().any(|s| s.binary_search(&k).is_ok()) {
                return Err(Error::invalid(format!("cover misses block {k}")));
            }
        }
        Ok(ClosedCover { prim_size, sets })
    }

    /// The one-set cover `{Prim A}`.
    pub fn trivial(prim_size: usize) -> Self {
        ClosedCover {
            prim_size,
            sets: vec![(0..prim_size).collect()],
        }
    }

    pub fn prim_size(&self) -> usize {
        self.prim_size
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn sets(&self) -> &[BlockSet] {
        &self.sets
    }

    pub fn set(&self, i: usize) -> &[usize] {
        &self.sets[i]
    }

    /// `F_{i₁} ∩ … ∩ F_{i_r}`.
    pub fn overlap(&self, idx: &[usize]) -> BlockSet {
        let mut acc = self.sets[idx[0]].clone();
        for &i in &idx[1..] {
            acc = intersect(&acc, &self.sets[i]);
        }
        acc
    }

    /// Indices of the cover sets containing block `k`.
    pub fn sets_containing(&self, k: usize) -> Vec<usize> {
        (0..self.sets.len())
            .filter(|&i| self.sets[i].binary_search(&k).is_ok())
            .collect()
    }

    /// Checks that this covers the spectrum of `a`, which must be an
    /// unrestricted algebra labelled `0..K`.
    pub fn check_algebra(&self, a: &FdCStarAlgebra) -> Result<()> {
        if a.num_blocks() != self.prim_size || a.labels().iter().enumerate().any(|(i, &l)| i != l) {
            return Err(Error::invalid(format!(
                "cover of a {}-point spectrum used with an algebra with blocks {:?}",
                self.prim_size,
                a.labels()
            )));
        }
        Ok(())
    }
}

/// `B = ⊕ᵢ A|_{F_i}`, with blocks indexed by pairs `(i, k)`, `k ∈ F_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct SumAlgebraB {
    base: FdCStarAlgebra,
    cover: ClosedCover,
    parts: Vec<FdCStarAlgebra>,
}

impl SumAlgebraB {
    pub fn new(base: &FdCStarAlgebra, cover: &ClosedCover) -> Result<Self> {
        cover.check_algebra(base)?;
        let parts = cover
            .sets()
            .iter()
            .map(|s| base.restrict(s))
            .collect::<Result<_>>()?;
        Ok(SumAlgebraB {
            base: base.clone(),
            cover: cover.clone(),
            parts,
        })
    }

    pub fn base(&self) -> &FdCStarAlgebra {
        &self.base
    }

    pub fn cover(&self) -> &ClosedCover {
        &self.cover
    }

    /// `A|_{F_i}`.
    pub fn part(&self, i: usize) -> &FdCStarAlgebra {
        &self.parts[i]
    }

    pub fn parts(&self) -> &[FdCStarAlgebra] {
        &self.parts
    }

    /// Blocks `(i, k)` in storage order.
    pub fn block_index(&self) -> Vec<(usize, usize)> {
        self.cover
            .sets()
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.iter().map(move |&k| (i, k)))
            .collect()
    }

    pub fn dimension(&self) -> usize {
        self.parts.iter().map(FdCStarAlgebra::dimension).sum()
    }
}

/// An element `(b_i)` of `B`.
#[derive(Clone, Debug, PartialEq)]
pub struct BElement {
    pub parts: Vec<AlgebraElement>,
}

impl BElement {
    pub fn identity(b: &SumAlgebraB) -> Self {
        BElement {
            parts: b.parts().iter().map(AlgebraElement::identity).collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        Ok(BElement {
            parts: self
                .parts
                .iter()
                .zip(&other.parts)
                .map(|(a, b)| a.mul(b))
                .collect::<Result<_>>()?,
        })
    }

    pub fn adjoint(&self) -> Self {
        BElement {
            parts: self.parts.iter().map(AlgebraElement::adjoint).collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.parts.iter().map(AlgebraElement::norm).fold(0.0, f64::max)
    }
}

/// `η(a) = (a|_{F_i})ᵢ`.
pub fn eta_embed(a_alg: &FdCStarAlgebra, cover: &ClosedCover, a: &AlgebraElement) -> Result<BElement> {
    cover.check_algebra(a_alg)?;
    if a.algebra() != a_alg {
        return Err(Error::invalid("element does not belong to the given algebra"));
    }
    Ok(BElement {
        parts: cover
            .sets()
            .iter()
            .map(|s| a.restrict(s))
            .collect::<Result<_>>()?,
    })
}

/// Largest disagreement `‖b_i|_{F_ij} − b_j|_{F_ij}‖` over ordered pairs and
/// shared blocks. Zero exactly on the image of `η`.
pub fn eta_image_residual(cover: &ClosedCover, b: &BElement) -> f64 {
    let n = cover.len();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in cover.overlap(&[i, j]) {
                let (Some(bi), Some(bj)) = (b.parts[i].block(k), b.parts[j].block(k)) else {
                    return f64::INFINITY;
                };
                worst = worst.max((bi - bj).max_abs());
            }
        }
    }
    worst
}

/// Whether `b ∈ B` lies in `η(A)`, i.e. its copies agree on every overlap.
pub fn image_of_eta_characterization(cover: &ClosedCover, b: &BElement, tol: f64) -> bool {
    b.parts.len() == cover.len() && eta_image_residual(cover, b) <= tol
}

/// The constraint map `B → ⊕_{(i,j), k ∈ F_ij} M_{n_k}`,
/// `b ↦ (b_i|_k − b_j|_k)`, in coordinates. Its kernel is `η(A)`.
pub fn eta_constraint_matrix(b: &SumAlgebraB) -> CMatrix {
    let cover = b.cover();
    let base = b.base();
    // Coordinate offsets of each (i, k) block of B.
    let mut offset = vec![Vec::new(); cover.len()];
    let mut pos = 0;
    for (i, s) in cover.sets().iter().enumerate() {
        for &k in s {
            offset[i].push((k, pos));
            let n = base.dims()[k];
            pos += n * n;
        }
    }
    let find = |i: usize, k: usize| offset[i].iter().find(|(l, _)| *l == k).unwrap().1;
    let mut rows = Vec::new();
    for i in 0..cover.len() {
        for j in 0..cover.len() {
            if i == j {
                continue;
            }
            for k in cover.overlap(&[i, j]) {
                let n = base.dims()[k];
                for e in 0..n * n {
                    let mut row = vec![C64::new(0.0, 0.0); pos];
                    row[find(i, k) + e] += C64::new(1.0, 0.0);
                    row[find(j, k) + e] -= C64::new(1.0, 0.0);
                    rows.push(row);
                }
            }
        }
    }
    let r = rows.len();
    CMatrix::from_fn(r, pos, |a, c| rows[a][c])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numlin::{kernel_basis, op_norm, rank, DEFAULT_RANK_TOL};

    fn alg(d: &[usize]) -> FdCStarAlgebra {
        FdCStarAlgebra::new(d.to_vec()).unwrap()
    }

    fn sample_element(a: &FdCStarAlgebra, seed: f64) -> AlgebraElement {
        let blocks = a
            .dims()
            .iter()
            .enumerate()
            .map(|(p, &n)| {
                CMatrix::from_fn(n, n, |r, c| {
                    let t = seed + (p * 17 + r * 5 + c) as f64;
                    C64::new((t * 1.3).sin(), (t * 0.7).cos())
                })
            })
            .collect();
        AlgebraElement::new(a.clone(), blocks).unwrap()
    }

    #[test]
    fn restrict_algebra_examples() {
        let a = alg(&[2, 1, 3]);
        assert_eq!(a.restrict(&[0, 1, 2]).unwrap(), a);
        let single = a.restrict(&[1]).unwrap();
        assert_eq!(single.dims(), &[1]);
        assert_eq!(single.labels(), &[1]);
        let zero = a.restrict(&[]).unwrap();
        assert!(zero.is_zero());
        assert!(matches!(a.restrict(&[3]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn restrict_element_examples() {
        let a = alg(&[2, 1, 3]);
        let x = AlgebraElement::new(
            a.clone(),
            vec![
                CMatrix::identity(2),
                CMatrix::diag(&[C64::new(3.0, 0.0)]),
                CMatrix::identity(3),
            ],
        )
        .unwrap();
        let r = x.restrict(&[0, 1]).unwrap();
        assert_eq!(r.blocks(), &x.blocks()[..2]);
        assert!(x.restrict(&[7]).is_err());

        let y = sample_element(&a, 0.5);
        let twice = y.restrict(&[0, 2]).unwrap().restrict(&[2]).unwrap();
        assert_eq!(twice, y.restrict(&[2]).unwrap());

        let f = [0, 2];
        let expected = f
            .iter()
            .map(|&k| op_norm(y.block(k).unwrap()).unwrap())
            .fold(0.0, f64::max);
        assert!((y.restrict(&f).unwrap().norm() - expected).abs() < 1e-14);
    }

    #[test]
    fn restriction_is_a_star_homomorphism() {
        let a = alg(&[2, 3, 1]);
        let x = sample_element(&a, 0.1);
        let y = sample_element(&a, 2.2);
        let f = [0, 2];
        let lhs = x.mul(&y).unwrap().restrict(&f).unwrap();
        let rhs = x.restrict(&f).unwrap().mul(&y.restrict(&f).unwrap()).unwrap();
        assert_eq!(lhs.max_abs_diff(&rhs), 0.0);
        assert_eq!(x.adjoint().restrict(&f).unwrap(), x.restrict(&f).unwrap().adjoint());
        assert!(x.restrict(&f).unwrap().norm() <= x.norm() + 1e-15);
    }

    #[test]
    fn cover_validation() {
        assert!(ClosedCover::new(3, vec![vec![0, 1], vec![1, 2]]).is_ok());
        assert!(ClosedCover::new(3, vec![vec![0, 1]]).is_err());
        assert!(ClosedCover::new(3, vec![vec![0, 1, 2, 3]]).is_err());
        let c = ClosedCover::new(3, vec![vec![2, 0, 2], vec![], vec![1]]).unwrap();
        assert_eq!(c.set(0), &[0, 2]);
        assert!(c.set(1).is_empty());
        assert_eq!(c.overlap(&[0, 2]), Vec::<usize>::new());
        assert_eq!(c.sets_containing(2), vec![0]);
    }

    #[test]
    fn eta_is_an_isometric_homomorphism() {
        let a = alg(&[2, 1, 3]);
        let cover = ClosedCover::new(3, vec![vec![0, 1], vec![1, 2], vec![0, 2]]).unwrap();
        let x = sample_element(&a, 0.3);
        let y = sample_element(&a, 1.9);
        let ex = eta_embed(&a, &cover, &x).unwrap();
        let ey = eta_embed(&a, &cover, &y).unwrap();
        assert!((ex.norm() - x.norm()).abs() < 1e-12);
        let lhs = ex.mul(&ey).unwrap();
        let rhs = eta_embed(&a, &cover, &x.mul(&y).unwrap()).unwrap();
        assert_eq!(lhs, rhs);
        assert!(image_of_eta_characterization(&cover, &ex, 1e-12));

        let id = eta_embed(&a, &cover, &AlgebraElement::identity(&a)).unwrap();
        for (i, part) in id.parts.iter().enumerate() {
            assert_eq!(part, &AlgebraElement::identity(&a.restrict(cover.set(i)).unwrap()));
        }

        // The norm max over i of ‖a|_{F_i}‖ is attained.
        let best = (0..cover.len())
            .map(|i| x.restrict(cover.set(i)).unwrap().norm())
            .fold(0.0, f64::max);
        assert!((best - x.norm()).abs() < 1e-14);
    }

    #[test]
    fn perturbed_duplicate_is_outside_eta_image() {
        let a = alg(&[2, 1]);
        let cover = ClosedCover::new(2, vec![vec![0, 1], vec![1]]).unwrap();
        let mut b = eta_embed(&a, &cover, &sample_element(&a, 0.0)).unwrap();
        let mut blk = b.parts[1].blocks()[0].clone();
        blk[(0, 0)] += C64::new(1e-3, 0.0);
        b.parts[1] = AlgebraElement::new(b.parts[1].algebra().clone(), vec![blk]).unwrap();
        assert!(!image_of_eta_characterization(&cover, &b, 1e-9));
    }

    #[test]
    fn constraint_count_matches_dimension_formula() {
        let a = alg(&[2, 1, 3]);
        let cover = ClosedCover::new(3, vec![vec![0, 1], vec![1, 2], vec![0, 1, 2]]).unwrap();
        let b = SumAlgebraB::new(&a, &cover).unwrap();
        let m = eta_constraint_matrix(&b);
        // Σ_k n_k² (c_k − 1), c_k = number of sets containing k.
        let expected: usize = (0..3)
            .map(|k| a.dims()[k].pow(2) * (cover.sets_containing(k).len() - 1))
            .sum();
        assert_eq!(expected, 4 + 2 + 9);
        assert_eq!(rank(&m, DEFAULT_RANK_TOL).unwrap(), expected);
        let ker = kernel_basis(&m, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(ker.cols(), a.dimension());
    }
}
