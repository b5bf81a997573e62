//! Right Hilbert modules over `⊕ₖ M_{n_k}`.
//!
//! Every such module is unitarily `⊕ₖ ℂ^{m_k × n_k}` with inner product
//! `⟨x|y⟩_k = x_k* y_k`, so a module is just its multiplicity vector and an
//! adjointable map is one `p_k × m_k` matrix per block acting on the left.
//! Zero multiplicities are kept as `0 × n_k` blocks.

use crate::cstar::{AlgebraElement, BElement, ClosedCover, FdCStarAlgebra};
use crate::error::{Error, Result};
use crate::numlin::{is_unitary, norm, CMatrix, C64, ONE, ZERO};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HilbertModule {
    algebra: FdCStarAlgebra,
    mult: Vec<usize>,
}

impl HilbertModule {
    pub fn new(algebra: FdCStarAlgebra, mult: Vec<usize>) -> Result<Self> {
        if mult.len() != algebra.num_blocks() {
            return Err(Error::invalid(format!(
                "multiplicity vector has {} entries for {} blocks",
                mult.len(),
                algebra.num_blocks()
            )));
        }
        Ok(HilbertModule { algebra, mult })
    }

    /// The algebra as a module over itself (`m_k = n_k`).
    pub fn standard(algebra: &FdCStarAlgebra) -> Self {
        HilbertModule {
            algebra: algebra.clone(),
            mult: algebra.dims().to_vec(),
        }
    }

    pub fn algebra(&self) -> &FdCStarAlgebra {
        &self.algebra
    }

    pub fn mult(&self) -> &[usize] {
        &self.mult
    }

    pub fn mult_of(&self, label: usize) -> Option<usize> {
        self.algebra.position(label).map(|p| self.mult[p])
    }

    /// `(m_k, n_k)` for the block at position `p`.
    pub fn block_shape(&self, p: usize) -> (usize, usize) {
        (self.mult[p], self.algebra.dims()[p])
    }

    /// Complex dimension `Σ m_k n_k`.
    pub fn dim(&self) -> usize {
        (0..self.mult.len())
            .map(|p| {
                let (m, n) = self.block_shape(p);
                m * n
            })
            .sum()
    }

    /// Coordinate offset of each block in the flattened layout.
    pub fn block_offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.mult.len());
        let mut acc = 0;
        for p in 0..self.mult.len() {
            out.push(acc);
            let (m, n) = self.block_shape(p);
            acc += m * n;
        }
        out
    }

    /// `X|_F = X / X·J_F`.
    pub fn restrict(&self, set: &[usize]) -> Result<Self> {
        let alg = self.algebra.restrict(set)?;
        let mult = alg.labels().iter().map(|&k| self.mult_of(k).unwrap()).collect();
        Ok(HilbertModule { algebra: alg, mult })
    }

    /// The same module viewed over a larger algebra whose blocks include
    /// these labels, with multiplicity zero on the new blocks.
    pub fn extend_by_zero(&self, ambient: &FdCStarAlgebra) -> Result<Self> {
        ambient.check_subset(self.algebra.labels())?;
        for &k in self.algebra.labels() {
            if ambient.dim_of(k) != self.algebra.dim_of(k) {
                return Err(Error::invalid(format!("block {k} changes size under extension")));
            }
        }
        let mult = ambient
            .labels()
            .iter()
            .map(|&k| self.mult_of(k).unwrap_or(0))
            .collect();
        Ok(HilbertModule {
            algebra: ambient.clone(),
            mult,
        })
    }

    /// Matrix of `x ↦ x·a` on flattened coordinates.
    pub fn right_action_matrix(&self, a: &AlgebraElement) -> Result<CMatrix> {
        if a.algebra() != &self.algebra {
            return Err(Error::invalid("right action by an element of another algebra"));
        }
        let parts: Vec<CMatrix> = (0..self.mult.len())
            .map(|p| CMatrix::identity(self.mult[p]).kron(&a.blocks()[p].transpose()))
            .collect();
        Ok(CMatrix::block_diag(&parts))
    }

    /// Standard basis: matrix units in each block, in coordinate order.
    pub fn basis(&self) -> Vec<ModuleVector> {
        (0..self.dim())
            .map(|i| {
                let mut coords = vec![ZERO; self.dim()];
                coords[i] = ONE;
                ModuleVector::from_coords(self, &coords).unwrap()
            })
            .collect()
    }
}

/// `X|_F` on modules.
pub fn restrict_module(x: &HilbertModule, set: &[usize]) -> Result<HilbertModule> {
    x.restrict(set)
}

/// An element of a Hilbert module: one `m_k × n_k` matrix per block.
#[derive(Clone, Debug, PartialEq)]
pub struct ModuleVector {
    module: HilbertModule,
    blocks: Vec<CMatrix>,
}

impl ModuleVector {
    pub fn new(module: HilbertModule, blocks: Vec<CMatrix>) -> Result<Self> {
        if blocks.len() != module.mult.len() {
            return Err(Error::invalid("vector block count does not match module"));
        }
        for (p, b) in blocks.iter().enumerate() {
            if b.shape() != module.block_shape(p) {
                return Err(Error::invalid(format!(
                    "vector block {p} has shape {:?}, module expects {:?}",
                    b.shape(),
                    module.block_shape(p)
                )));
            }
            b.check_finite()?;
        }
        Ok(ModuleVector { module, blocks })
    }

    pub fn zero(module: &HilbertModule) -> Self {
        let blocks = (0..module.mult.len())
            .map(|p| {
                let (m, n) = module.block_shape(p);
                CMatrix::zeros(m, n)
            })
            .collect();
        ModuleVector {
            module: module.clone(),
            blocks,
        }
    }

    pub fn from_coords(module: &HilbertModule, coords: &[C64]) -> Result<Self> {
        if coords.len() != module.dim() {
            return Err(Error::invalid(format!(
                "{} coordinates for a module of dimension {}",
                coords.len(),
                module.dim()
            )));
        }
        let mut blocks = Vec::with_capacity(module.mult.len());
        let mut at = 0;
        for p in 0..module.mult.len() {
            let (m, n) = module.block_shape(p);
            blocks.push(CMatrix::from_row_major(m, n, coords[at..at + m * n].to_vec())?);
            at += m * n;
        }
        Ok(ModuleVector {
            module: module.clone(),
            blocks,
        })
    }

    pub fn coords(&self) -> Vec<C64> {
        self.blocks.iter().flat_map(|b| b.as_slice().iter().copied()).collect()
    }

    pub fn module(&self) -> &HilbertModule {
        &self.module
    }

    pub fn blocks(&self) -> &[CMatrix] {
        &self.blocks
    }

    pub fn block(&self, label: usize) -> Option<&CMatrix> {
        self.module.algebra.position(label).map(|p| &self.blocks[p])
    }

    /// `‖x‖ = ‖⟨x|x⟩‖^{1/2}`, computed as the largest block norm.
    pub fn norm(&self) -> f64 {
        self.blocks.iter().map(norm).fold(0.0, f64::max)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_module(other)?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_module(other)?;
        Ok(self.zip_with(other, |a, b| a - b))
    }

    pub fn scale(&self, s: C64) -> Self {
        ModuleVector {
            module: self.module.clone(),
            blocks: self.blocks.iter().map(|b| b.scale(s)).collect(),
        }
    }

    /// Largest entry difference between two vectors of one module.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.module != other.module {
            return f64::INFINITY;
        }
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| (a - b).max_abs())
            .fold(0.0, f64::max)
    }

    pub fn restrict(&self, set: &[usize]) -> Result<Self> {
        let module = self.module.restrict(set)?;
        let blocks = module
            .algebra
            .labels()
            .iter()
            .map(|&k| self.block(k).unwrap().clone())
            .collect();
        Ok(ModuleVector { module, blocks })
    }

    fn same_module(&self, other: &Self) -> Result<()> {
        if self.module != other.module {
            return Err(Error::invalid("vectors of different modules"));
        }
        Ok(())
    }

    fn zip_with(&self, other: &Self, f: impl Fn(&CMatrix, &CMatrix) -> CMatrix) -> Self {
        ModuleVector {
            module: self.module.clone(),
            blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| f(a, b)).collect(),
        }
    }
}

/// `x|_F`.
pub fn restrict_vector(x: &ModuleVector, set: &[usize]) -> Result<ModuleVector> {
    x.restrict(set)
}

/// `⟨x|y⟩`, with block `k` equal to `x_k* y_k`.
pub fn inner_product(x: &ModuleVector, y: &ModuleVector) -> Result<AlgebraElement> {
    x.same_module(y)?;
    let blocks = x.blocks.iter().zip(&y.blocks).map(|(a, b)| a.adjoint_mul(b)).collect();
    AlgebraElement::new(x.module.algebra.clone(), blocks)
}

/// `x·a`, blockwise `x_k a_k`.
pub fn right_act(x: &ModuleVector, a: &AlgebraElement) -> Result<ModuleVector> {
    if a.algebra() != x.module.algebra() {
        return Err(Error::invalid("right action by an element of another algebra"));
    }
    Ok(ModuleVector {
        module: x.module.clone(),
        blocks: x
            .blocks
            .iter()
            .zip(a.blocks())
            .map(|(v, b)| v.matmul(b))
            .collect(),
    })
}

/// Norm of a square matrix `[x_rs]` of vectors in `M_r(X)`: per block the
/// assembled `r·m_k × r·n_k` matrix, maximised over blocks.
pub fn amplified_norm(entries: &[Vec<ModuleVector>]) -> Result<f64> {
    let r = entries.len();
    if r == 0 {
        return Ok(0.0);
    }
    if entries.iter().any(|row| row.len() != r) {
        return Err(Error::invalid("amplification needs a square array of vectors"));
    }
    let module = entries[0][0].module();
    if entries.iter().flatten().any(|v| v.module() != module) {
        return Err(Error::invalid("amplified entries belong to different modules"));
    }
    let mut worst: f64 = 0.0;
    for p in 0..module.mult.len() {
        let rows: Vec<CMatrix> = entries
            .iter()
            .map(|row| CMatrix::hstack(&row.iter().map(|v| v.blocks[p].clone()).collect::<Vec<_>>()))
            .collect();
        worst = worst.max(norm(&CMatrix::vstack(&rows)));
    }
    Ok(worst)
}

/// A module map `X → Y` acting as left multiplication by `T_k` on each block.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjointableMap {
    source: HilbertModule,
    target: HilbertModule,
    blocks: Vec<CMatrix>,
}

impl AdjointableMap {
    pub fn new(source: HilbertModule, target: HilbertModule, blocks: Vec<CMatrix>) -> Result<Self> {
        if source.algebra != target.algebra {
            return Err(Error::invalid("adjointable map between modules over different algebras"));
        }
        if blocks.len() != source.mult.len() {
            return Err(Error::invalid("map block count does not match module"));
        }
        for (p, t) in blocks.iter().enumerate() {
            if t.shape() != (target.mult[p], source.mult[p]) {
                return Err(Error::invalid(format!(
                    "map block {p} has shape {:?}, expected {}x{}",
                    t.shape(),
                    target.mult[p],
                    source.mult[p]
                )));
            }
            t.check_finite()?;
        }
        Ok(AdjointableMap {
            source,
            target,
            blocks,
        })
    }

    pub fn identity(x: &HilbertModule) -> Self {
        AdjointableMap {
            source: x.clone(),
            target: x.clone(),
            blocks: x.mult.iter().map(|&m| CMatrix::identity(m)).collect(),
        }
    }

    pub fn zero(x: &HilbertModule, y: &HilbertModule) -> Result<Self> {
        let blocks = x.mult.iter().zip(&y.mult).map(|(&m, &p)| CMatrix::zeros(p, m)).collect();
        Self::new(x.clone(), y.clone(), blocks)
    }

    pub fn source(&self) -> &HilbertModule {
        &self.source
    }

    pub fn target(&self) -> &HilbertModule {
        &self.target
    }

    pub fn blocks(&self) -> &[CMatrix] {
        &self.blocks
    }

    pub fn block(&self, label: usize) -> Option<&CMatrix> {
        self.source.algebra.position(label).map(|p| &self.blocks[p])
    }

    /// `‖α‖ = max_k ‖T_k‖`.
    pub fn norm(&self) -> f64 {
        self.blocks.iter().map(norm).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.source != other.source || self.target != other.target {
            return f64::INFINITY;
        }
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| (a - b).max_abs())
            .fold(0.0, f64::max)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.source != other.source || self.target != other.target {
            return Err(Error::invalid("adding maps with different domains"));
        }
        Ok(AdjointableMap {
            source: self.source.clone(),
            target: self.target.clone(),
            blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn scale(&self, s: C64) -> Self {
        AdjointableMap {
            source: self.source.clone(),
            target: self.target.clone(),
            blocks: self.blocks.iter().map(|b| b.scale(s)).collect(),
        }
    }

    pub fn restrict(&self, set: &[usize]) -> Result<Self> {
        let source = self.source.restrict(set)?;
        let target = self.target.restrict(set)?;
        let blocks = source
            .algebra
            .labels()
            .iter()
            .map(|&k| self.block(k).unwrap().clone())
            .collect();
        Ok(AdjointableMap {
            source,
            target,
            blocks,
        })
    }

    /// Matrix of the map on flattened coordinates.
    pub fn coordinate_matrix(&self) -> CMatrix {
        let parts: Vec<CMatrix> = self
            .blocks
            .iter()
            .zip(self.source.algebra.dims())
            .map(|(t, &n)| t.kron(&CMatrix::identity(n)))
            .collect();
        CMatrix::block_diag(&parts)
    }
}

/// `α|_F`, defined by `α|_F(x|_F) = α(x)|_F`.
pub fn restrict_map(alpha: &AdjointableMap, set: &[usize]) -> Result<AdjointableMap> {
    alpha.restrict(set)
}

/// `α*`: blockwise conjugate transpose.
pub fn adjoint_of(alpha: &AdjointableMap) -> AdjointableMap {
    AdjointableMap {
        source: alpha.target.clone(),
        target: alpha.source.clone(),
        blocks: alpha.blocks.iter().map(CMatrix::adjoint).collect(),
    }
}

pub fn apply_map(alpha: &AdjointableMap, x: &ModuleVector) -> Result<ModuleVector> {
    if x.module() != &alpha.source {
        return Err(Error::invalid("vector is not in the domain of the map"));
    }
    Ok(ModuleVector {
        module: alpha.target.clone(),
        blocks: alpha.blocks.iter().zip(&x.blocks).map(|(t, v)| t.matmul(v)).collect(),
    })
}

/// `α ∘ β`.
pub fn compose(alpha: &AdjointableMap, beta: &AdjointableMap) -> Result<AdjointableMap> {
    if beta.target != alpha.source {
        return Err(Error::invalid("composing maps with mismatched modules"));
    }
    Ok(AdjointableMap {
        source: beta.source.clone(),
        target: alpha.target.clone(),
        blocks: alpha.blocks.iter().zip(&beta.blocks).map(|(a, b)| a.matmul(b)).collect(),
    })
}

/// Every block unitary (so source and target multiplicities agree).
pub fn is_unitary_module_map(alpha: &AdjointableMap, tol: f64) -> bool {
    alpha.blocks.iter().all(|t| is_unitary(t, tol))
}

/// Recovers the adjointable map behind a linear map on module vectors.
///
/// `linear` is probed on the standard basis of `x`; it must commute with the
/// right action of every matrix unit of the algebra up to `tol`, otherwise
/// [`Error::NotAModuleMap`] reports the worst residual. The recovered `T_k`
/// has column `r` equal to column `0` of the image of `E_{r,0}` in block `k`.
pub fn module_map_from_linear<F>(
    linear: F,
    x: &HilbertModule,
    y: &HilbertModule,
    tol: f64,
) -> Result<AdjointableMap>
where
    F: Fn(&ModuleVector) -> Result<ModuleVector>,
{
    if x.algebra != y.algebra {
        return Err(Error::invalid("module map between different algebras"));
    }
    let basis = x.basis();
    let mut columns = Vec::with_capacity(basis.len());
    for v in &basis {
        let w = linear(v)?;
        if w.module() != y {
            return Err(Error::invalid("linear map output is not in the target module"));
        }
        columns.push(CMatrix::column_vector(w.coords()));
    }
    let lmat = if columns.is_empty() {
        CMatrix::zeros(y.dim(), 0)
    } else {
        CMatrix::hstack(&columns)
    };

    let alg = &x.algebra;
    let mut residual: f64 = 0.0;
    for (p, r, c) in alg.matrix_units() {
        let e = AlgebraElement::unit(alg, p, r, c);
        let lhs = lmat.matmul(&x.right_action_matrix(&e)?);
        let rhs = y.right_action_matrix(&e)?.matmul(&lmat);
        residual = residual.max((&lhs - &rhs).max_abs());
    }
    if residual > tol {
        return Err(Error::NotAModuleMap { residual });
    }

    let x_off = x.block_offsets();
    let y_off = y.block_offsets();
    let blocks = (0..x.mult.len())
        .map(|p| {
            let (m, n) = x.block_shape(p);
            let pm = y.mult[p];
            CMatrix::from_fn(pm, m, |row, r| lmat[(y_off[p] + row * n, x_off[p] + r * n)])
        })
        .collect();
    let alpha = AdjointableMap::new(x.clone(), y.clone(), blocks)?;
    let rebuilt = (&alpha.coordinate_matrix() - &lmat).max_abs();
    if rebuilt > tol {
        return Err(Error::NotAModuleMap { residual: rebuilt });
    }
    Ok(alpha)
}

/// A Hilbert module over `B = ⊕ᵢ A|_{F_i}`: one Hilbert `A|_{F_i}`-module
/// `Z_i = Z·1|_{F_i}` per cover set, with `Z = ⊕ᵢ Z_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct BModule {
    base: FdCStarAlgebra,
    cover: ClosedCover,
    parts: Vec<HilbertModule>,
}

impl BModule {
    pub fn new(base: &FdCStarAlgebra, cover: &ClosedCover, parts: Vec<HilbertModule>) -> Result<Self> {
        cover.check_algebra(base)?;
        if parts.len() != cover.len() {
            return Err(Error::invalid(format!(
                "{} local modules for a cover with {} sets",
                parts.len(),
                cover.len()
            )));
        }
        for (i, z) in parts.iter().enumerate() {
            if z.algebra() != &base.restrict(cover.set(i))? {
                return Err(Error::invalid(format!("local module {i} is not over A|_F{i}")));
            }
        }
        Ok(BModule {
            base: base.clone(),
            cover: cover.clone(),
            parts,
        })
    }

    /// `⊕ᵢ X|_{F_i}`.
    pub fn pulled_apart(x: &HilbertModule, cover: &ClosedCover) -> Result<Self> {
        cover.check_algebra(x.algebra())?;
        let parts = cover.sets().iter().map(|s| x.restrict(s)).collect::<Result<_>>()?;
        Ok(BModule {
            base: x.algebra().clone(),
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

    pub fn parts(&self) -> &[HilbertModule] {
        &self.parts
    }

    pub fn part(&self, i: usize) -> &HilbertModule {
        &self.parts[i]
    }

    /// `m^{(i)}_k`, or `None` when `k ∉ F_i`.
    pub fn mult(&self, i: usize, k: usize) -> Option<usize> {
        self.parts[i].mult_of(k)
    }

    pub fn dim(&self) -> usize {
        self.parts.iter().map(HilbertModule::dim).sum()
    }

    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.parts
            .iter()
            .map(|p| {
                let o = acc;
                acc += p.dim();
                o
            })
            .collect()
    }

    /// Prim label of every flattened coordinate.
    pub fn coord_labels(&self) -> Vec<usize> {
        self.parts.iter().flat_map(coord_labels).collect()
    }

    pub fn zero(&self) -> BVector {
        BVector {
            parts: self.parts.iter().map(ModuleVector::zero).collect(),
        }
    }

    pub fn from_coords(&self, coords: &[C64]) -> Result<BVector> {
        if coords.len() != self.dim() {
            return Err(Error::invalid("coordinate count does not match B-module"));
        }
        let mut at = 0;
        let mut parts = Vec::with_capacity(self.parts.len());
        for p in &self.parts {
            parts.push(ModuleVector::from_coords(p, &coords[at..at + p.dim()])?);
            at += p.dim();
        }
        Ok(BVector { parts })
    }

    pub fn contains(&self, z: &BVector) -> bool {
        z.parts.len() == self.parts.len() && z.parts.iter().zip(&self.parts).all(|(v, m)| v.module() == m)
    }
}

/// Prim label of each flattened coordinate of a module.
pub fn coord_labels(x: &HilbertModule) -> Vec<usize> {
    let mut out = Vec::with_capacity(x.dim());
    for (p, &k) in x.algebra().labels().iter().enumerate() {
        let (m, n) = x.block_shape(p);
        out.extend(std::iter::repeat_n(k, m * n));
    }
    out
}

/// An element `z = (z_i)` of a [`BModule`].
#[derive(Clone, Debug, PartialEq)]
pub struct BVector {
    pub parts: Vec<ModuleVector>,
}

impl BVector {
    pub fn coords(&self) -> Vec<C64> {
        self.parts.iter().flat_map(ModuleVector::coords).collect()
    }

    /// `‖z‖ = max_i ‖z_i‖`.
    pub fn norm(&self) -> f64 {
        self.parts.iter().map(ModuleVector::norm).fold(0.0, f64::max)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Ok(BVector {
            parts: self.parts.iter().zip(&other.parts).map(|(a, b)| a.sub(b)).collect::<Result<_>>()?,
        })
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.parts.len() != other.parts.len() {
            return f64::INFINITY;
        }
        self.parts
            .iter()
            .zip(&other.parts)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }

    /// `z·b = (z_i b_i)`.
    pub fn right_act(&self, b: &BElement) -> Result<Self> {
        if b.parts.len() != self.parts.len() {
            return Err(Error::invalid("B element has the wrong number of parts"));
        }
        Ok(BVector {
            parts: self.parts.iter().zip(&b.parts).map(|(z, bi)| right_act(z, bi)).collect::<Result<_>>()?,
        })
    }

    /// `⟨z|z'⟩_B = (⟨z_i|z'_i⟩)_i`.
    pub fn inner_product(&self, other: &Self) -> Result<BElement> {
        if self.parts.len() != other.parts.len() {
            return Err(Error::invalid("B vectors of different modules"));
        }
        Ok(BElement {
            parts: self
                .parts
                .iter()
                .zip(&other.parts)
                .map(|(a, b)| inner_product(a, b))
                .collect::<Result<_>>()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numlin::op_norm;

    fn alg(d: &[usize]) -> FdCStarAlgebra {
        FdCStarAlgebra::new(d.to_vec()).unwrap()
    }

    fn wave(rows: usize, cols: usize, seed: f64) -> CMatrix {
        CMatrix::from_fn(rows, cols, |r, c| {
            let t = seed + (r * 7 + c * 3) as f64 * 0.61;
            C64::new(t.sin(), (1.7 * t).cos())
        })
    }

    fn vector(x: &HilbertModule, seed: f64) -> ModuleVector {
        let blocks = (0..x.mult().len())
            .map(|p| {
                let (m, n) = x.block_shape(p);
                wave(m, n, seed + p as f64)
            })
            .collect();
        ModuleVector::new(x.clone(), blocks).unwrap()
    }

    fn element(a: &FdCStarAlgebra, seed: f64) -> AlgebraElement {
        let blocks = a.dims().iter().enumerate().map(|(p, &n)| wave(n, n, seed + 2.0 * p as f64)).collect();
        AlgebraElement::new(a.clone(), blocks).unwrap()
    }

    fn map(x: &HilbertModule, y: &HilbertModule, seed: f64) -> AdjointableMap {
        let blocks = (0..x.mult().len())
            .map(|p| wave(y.mult()[p], x.mult()[p], seed + p as f64))
            .collect();
        AdjointableMap::new(x.clone(), y.clone(), blocks).unwrap()
    }

    #[test]
    fn inner_product_of_row_unit() {
        let x = HilbertModule::new(alg(&[2]), vec![1]).unwrap();
        let v = ModuleVector::new(x, vec![CMatrix::from_real(1, 2, &[1.0, 0.0])]).unwrap();
        let ip = inner_product(&v, &v).unwrap();
        assert_eq!(ip.blocks()[0], CMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn inner_product_axioms() {
        let a = alg(&[2, 1, 3]);
        let x = HilbertModule::new(a.clone(), vec![1, 2, 2]).unwrap();
        let u = vector(&x, 0.2);
        let v = vector(&x, 1.4);
        let e = element(&a, 0.9);
        let lhs = inner_product(&u, &right_act(&v, &e).unwrap()).unwrap();
        let rhs = inner_product(&u, &v).unwrap().mul(&e).unwrap();
        assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        let swapped = inner_product(&v, &u).unwrap().adjoint();
        assert!(swapped.max_abs_diff(&inner_product(&u, &v).unwrap()) < 1e-15);

        let norm_sq = u.norm().powi(2);
        let via_ip = inner_product(&u, &u).unwrap().norm();
        assert!((norm_sq - via_ip).abs() < 1e-12 * norm_sq.max(1.0));

        // ⟨x|x⟩ ≥ 0: Hermitian with nonnegative spectrum.
        for b in inner_product(&u, &u).unwrap().blocks() {
            assert!((b - &b.adjoint()).max_abs() < 1e-15);
            let sv = crate::numlin::svd(b).unwrap();
            let recon_trace: f64 = sv.singular_values.iter().sum();
            assert!((recon_trace - b.trace().re).abs() < 1e-12);
        }
    }

    #[test]
    fn right_action_examples() {
        let a = alg(&[2, 3]);
        let x = HilbertModule::new(a.clone(), vec![2, 1]).unwrap();
        let v = vector(&x, 0.0);
        assert_eq!(right_act(&v, &AlgebraElement::identity(&a)).unwrap(), v);
        assert_eq!(right_act(&v, &AlgebraElement::zero(&a)).unwrap(), ModuleVector::zero(&x));
        let (e, f) = (element(&a, 1.0), element(&a, 3.0));
        let lhs = right_act(&right_act(&v, &e).unwrap(), &f).unwrap();
        let rhs = right_act(&v, &e.mul(&f).unwrap()).unwrap();
        assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        let wrong = AlgebraElement::identity(&alg(&[2]));
        assert!(right_act(&v, &wrong).is_err());
    }

    #[test]
    fn restriction_examples() {
        let a = alg(&[2, 1, 3]);
        let x = HilbertModule::new(a.clone(), vec![1, 2, 2]).unwrap();
        assert_eq!(x.restrict(&[0, 1, 2]).unwrap(), x);
        let r = x.restrict(&[0, 1]).unwrap();
        assert_eq!(r.mult(), &[1, 2]);
        assert_eq!(r.algebra().dims(), &[2, 1]);
        assert!(x.restrict(&[5]).is_err());

        let v = vector(&x, 0.4);
        assert_eq!(v.restrict(&[0, 1, 2]).unwrap(), v);

        // Quotient norm: the distance from v to X·J_F is attained by
        // subtracting the blocks outside F.
        let f = [0, 2];
        let mut proj_blocks = Vec::new();
        for p in 0..3 {
            let (m, n) = x.block_shape(p);
            proj_blocks.push(if f.contains(&p) { CMatrix::zeros(m, n) } else { v.blocks()[p].clone() });
        }
        let nearest = ModuleVector::new(x.clone(), proj_blocks).unwrap();
        let dist = v.sub(&nearest).unwrap().norm();
        assert!((v.restrict(&f).unwrap().norm() - dist).abs() < 1e-14);
        // Any other element of X·J_F is no closer.
        for s in 0..5 {
            let mut other = Vec::new();
            for p in 0..3 {
                let (m, n) = x.block_shape(p);
                other.push(if f.contains(&p) { CMatrix::zeros(m, n) } else { wave(m, n, s as f64) });
            }
            let w = ModuleVector::new(x.clone(), other).unwrap();
            assert!(v.sub(&w).unwrap().norm() >= dist - 1e-14);
        }
    }

    #[test]
    fn restriction_commutes_with_composition_and_adjoints() {
        let a = alg(&[2, 1, 3]);
        let x = HilbertModule::new(a.clone(), vec![1, 2, 2]).unwrap();
        let y = HilbertModule::new(a.clone(), vec![3, 0, 1]).unwrap();
        let z = HilbertModule::new(a, vec![2, 2, 2]).unwrap();
        let beta = map(&x, &y, 0.1);
        let alpha = map(&y, &z, 0.7);
        let f = [1, 2];
        let lhs = compose(&alpha, &beta).unwrap().restrict(&f).unwrap();
        let rhs = compose(&alpha.restrict(&f).unwrap(), &beta.restrict(&f).unwrap()).unwrap();
        assert_eq!(lhs, rhs);
        assert_eq!(adjoint_of(&beta).restrict(&f).unwrap(), adjoint_of(&beta.restrict(&f).unwrap()));
    }

    #[test]
    fn adjoint_examples() {
        let a = alg(&[2, 3]);
        let x = HilbertModule::new(a.clone(), vec![2, 1]).unwrap();
        let y = HilbertModule::new(a, vec![1, 3]).unwrap();
        assert_eq!(adjoint_of(&AdjointableMap::identity(&x)), AdjointableMap::identity(&x));
        let alpha = map(&x, &y, 0.3);
        assert_eq!(adjoint_of(&adjoint_of(&alpha)), alpha);
        let u = vector(&x, 0.5);
        let v = vector(&y, 2.5);
        let lhs = inner_product(&apply_map(&alpha, &u).unwrap(), &v).unwrap();
        let rhs = inner_product(&u, &apply_map(&adjoint_of(&alpha), &v).unwrap()).unwrap();
        assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        let expected = alpha.blocks().iter().map(|t| op_norm(t).unwrap()).fold(0.0, f64::max);
        assert_eq!(alpha.norm(), expected);
        assert!(compose(&alpha, &alpha).is_err());
    }

    #[test]
    fn unitary_module_maps() {
        let a = alg(&[2, 1]);
        let x = HilbertModule::new(a.clone(), vec![2, 1]).unwrap();
        assert!(is_unitary_module_map(&AdjointableMap::identity(&x), 1e-12));
        let phases = AdjointableMap::new(
            x.clone(),
            x.clone(),
            vec![
                CMatrix::diag(&[C64::from_polar(1.0, 0.4), C64::from_polar(1.0, -2.0)]),
                CMatrix::diag(&[C64::from_polar(1.0, 1.0)]),
            ],
        )
        .unwrap();
        assert!(is_unitary_module_map(&phases, 1e-12));
        let u = vector(&x, 0.0);
        let v = vector(&x, 1.0);
        let before = inner_product(&u, &v).unwrap();
        let after = inner_product(&apply_map(&phases, &u).unwrap(), &apply_map(&phases, &v).unwrap()).unwrap();
        assert!(before.max_abs_diff(&after) < 1e-12);

        let y = HilbertModule::new(a, vec![3, 1]).unwrap();
        assert!(!is_unitary_module_map(&map(&x, &y, 0.0), 1e-12));
    }

    #[test]
    fn module_map_recovery() {
        let a = alg(&[2, 3]);
        let x = HilbertModule::new(a.clone(), vec![2, 1]).unwrap();
        let doubled = module_map_from_linear(|v| Ok(v.scale(C64::new(2.0, 0.0))), &x, &x, 1e-12).unwrap();
        for (t, &m) in doubled.blocks().iter().zip(x.mult()) {
            assert_eq!(t, &CMatrix::identity(m).scale(C64::new(2.0, 0.0)));
        }

        let y = HilbertModule::new(a.clone(), vec![1, 2]).unwrap();
        let alpha = map(&x, &y, 1.1);
        let recovered = module_map_from_linear(|v| apply_map(&alpha, v), &x, &y, 1e-12).unwrap();
        assert!(recovered.max_abs_diff(&alpha) < 1e-12);

        // Right multiplication by a non-central element does not commute
        // with the right action.
        let e = element(&a, 0.6);
        let err = module_map_from_linear(|v| right_act(v, &e), &x, &x, 1e-9).unwrap_err();
        match err {
            Error::NotAModuleMap { residual } => {
                // Independent commutation probe against one matrix unit.
                let unit = AlgebraElement::unit(&a, 0, 0, 1);
                let probe = x.basis().iter().map(|v| {
                    let l = right_act(&right_act(v, &unit).unwrap(), &e).unwrap();
                    let r = right_act(&right_act(v, &e).unwrap(), &unit).unwrap();
                    l.max_abs_diff(&r)
                }).fold(0.0, f64::max);
                assert!(residual >= probe - 1e-12);
                assert!(residual > 1e-3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn amplification_of_a_single_entry_matches_norm() {
        let x = HilbertModule::new(alg(&[2, 1]), vec![2, 3]).unwrap();
        let v = vector(&x, 0.0);
        let z = ModuleVector::zero(&x);
        let n = amplified_norm(&[vec![v.clone(), z.clone()], vec![z.clone(), z]]).unwrap();
        assert!((n - v.norm()).abs() < 1e-13);
    }
}
