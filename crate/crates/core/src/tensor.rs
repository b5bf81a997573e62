//! Finite models of `X ⊗_A B`, `Z ⊗_A B` and `Z ⊗_A B ⊗_A B`, the maps
//! between them, and a brute-force balanced tensor product used to check the
//! models.
//!
//! A [`TensorModel`] of arity `r` over a B-module `Z = ⊕ᵢ Z_i` has one
//! component per tuple `(i₁, …, i_r)` of cover indices, namely
//! `Z_{i₁}|_{F_{i₁…i_r}}`. Arity 1 is `Z` itself, arity 2 models `Z ⊗_A B`
//! and arity 3 models `Z ⊗_A B ⊗_A B`. B acts on the right through the last
//! index. Components are the projections onto the factors, so points are
//! separated by construction.

use std::collections::HashMap;

use crate::cstar::{AlgebraElement, BElement, ClosedCover, FdCStarAlgebra, SumAlgebraB};
use crate::error::{Error, Result};
use crate::glue::GluingDatum;
use crate::hmod::{self, coord_labels, BModule, BVector, HilbertModule, ModuleVector};
use crate::numlin::{
    inverse_sqrt_hermitian, kernel_basis, labelled_kernel_basis, matrix_of_linear, singular_values,
    unitarity_residual, CMatrix, C64, DEFAULT_RANK_TOL, ONE, ZERO,
};

/// Components indexed by tuples of cover indices.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorModel {
    z: BModule,
    arity: usize,
    tuples: Vec<Vec<usize>>,
    comps: Vec<HilbertModule>,
}

/// Model of `Z ⊗_A B`.
pub type PairTensorModel = TensorModel;
/// Model of `Z ⊗_A B ⊗_A B`.
pub type TripleTensorModel = TensorModel;

impl TensorModel {
    pub fn new(z: &BModule, arity: usize) -> Result<Self> {
        if arity == 0 {
            return Err(Error::invalid("tensor model needs arity at least 1"));
        }
        let n = z.cover().len();
        let count = n.checked_pow(arity as u32).ok_or_else(|| Error::invalid("tensor model too large"))?;
        let mut tuples = Vec::with_capacity(count);
        let mut comps = Vec::with_capacity(count);
        for mut code in 0..count {
            let mut t = vec![0; arity];
            for slot in t.iter_mut().rev() {
                *slot = code % n;
                code /= n;
            }
            comps.push(z.part(t[0]).restrict(&z.cover().overlap(&t))?);
            tuples.push(t);
        }
        Ok(TensorModel {
            z: z.clone(),
            arity,
            tuples,
            comps,
        })
    }

    pub fn single(z: &BModule) -> Result<Self> {
        Self::new(z, 1)
    }

    pub fn pair(z: &BModule) -> Result<Self> {
        Self::new(z, 2)
    }

    pub fn triple(z: &BModule) -> Result<Self> {
        Self::new(z, 3)
    }

    pub fn z(&self) -> &BModule {
        &self.z
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn tuples(&self) -> &[Vec<usize>] {
        &self.tuples
    }

    pub fn components(&self) -> &[HilbertModule] {
        &self.comps
    }

    /// Position of a tuple in the component list.
    pub fn index_of(&self, t: &[usize]) -> Result<usize> {
        let n = self.z.cover().len();
        if t.len() != self.arity || t.iter().any(|&i| i >= n) {
            return Err(Error::invalid(format!("tuple {t:?} does not index this model")));
        }
        Ok(t.iter().fold(0, |acc, &i| acc * n + i))
    }

    pub fn component_module(&self, t: &[usize]) -> Result<&HilbertModule> {
        Ok(&self.comps[self.index_of(t)?])
    }

    pub fn dim(&self) -> usize {
        self.comps.iter().map(HilbertModule::dim).sum()
    }

    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.comps
            .iter()
            .map(|c| {
                let o = acc;
                acc += c.dim();
                o
            })
            .collect()
    }

    pub fn coord_labels(&self) -> Vec<usize> {
        self.comps.iter().flat_map(coord_labels).collect()
    }

    pub fn zero(&self) -> ModelVector {
        ModelVector {
            comps: self.comps.iter().map(ModuleVector::zero).collect(),
        }
    }

    pub fn from_coords(&self, coords: &[C64]) -> Result<ModelVector> {
        if coords.len() != self.dim() {
            return Err(Error::invalid("coordinate count does not match tensor model"));
        }
        let mut at = 0;
        let mut comps = Vec::with_capacity(self.comps.len());
        for c in &self.comps {
            comps.push(ModuleVector::from_coords(c, &coords[at..at + c.dim()])?);
            at += c.dim();
        }
        Ok(ModelVector { comps })
    }

    pub fn contains(&self, t: &ModelVector) -> bool {
        t.comps.len() == self.comps.len() && t.comps.iter().zip(&self.comps).all(|(v, m)| v.module() == m)
    }

    fn check(&self, t: &ModelVector) -> Result<()> {
        if self.contains(t) {
            Ok(())
        } else {
            Err(Error::invalid("vector does not belong to this tensor model"))
        }
    }

    /// The projection `μ` onto one component.
    pub fn project(&self, t: &ModelVector, idx: &[usize]) -> Result<ModuleVector> {
        self.check(t)?;
        Ok(t.comps[self.index_of(idx)?].clone())
    }

    /// Right action of `b ∈ B` through the last index.
    pub fn right_act(&self, t: &ModelVector, b: &BElement) -> Result<ModelVector> {
        self.check(t)?;
        if b.parts.len() != self.z.cover().len() {
            return Err(Error::invalid("B element has the wrong number of parts"));
        }
        let comps = self
            .tuples
            .iter()
            .zip(&t.comps)
            .map(|(tup, v)| {
                let last = tup[self.arity - 1];
                let bl = b.parts[last].restrict(v.module().algebra().labels())?;
                hmod::right_act(v, &bl)
            })
            .collect::<Result<_>>()?;
        Ok(ModelVector { comps })
    }

    /// Arity-1 model vector from a B-module vector.
    pub fn from_bvector(&self, z: &BVector) -> Result<ModelVector> {
        let t = ModelVector { comps: z.parts.clone() };
        self.check(&t)?;
        Ok(t)
    }
}

/// A vector of a [`TensorModel`]: one module vector per component.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelVector {
    pub comps: Vec<ModuleVector>,
}

impl ModelVector {
    pub fn coords(&self) -> Vec<C64> {
        self.comps.iter().flat_map(ModuleVector::coords).collect()
    }

    /// Maximum over components.
    pub fn norm(&self) -> f64 {
        self.comps.iter().map(ModuleVector::norm).fold(0.0, f64::max)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Ok(ModelVector {
            comps: self.comps.iter().zip(&other.comps).map(|(a, b)| a.add(b)).collect::<Result<_>>()?,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Ok(ModelVector {
            comps: self.comps.iter().zip(&other.comps).map(|(a, b)| a.sub(b)).collect::<Result<_>>()?,
        })
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.comps.len() != other.comps.len() {
            return f64::INFINITY;
        }
        self.comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }
}

/// Norm of a square array of vectors of a direct sum, given as the list of
/// summand vectors of each entry: the maximum of the summand norms.
pub fn amplified_sum_norm(entries: &[Vec<&[ModuleVector]>]) -> Result<f64> {
    let r = entries.len();
    if r == 0 {
        return Ok(0.0);
    }
    let parts = entries[0][0].len();
    let mut worst: f64 = 0.0;
    for c in 0..parts {
        let slice: Vec<Vec<ModuleVector>> = entries
            .iter()
            .map(|row| row.iter().map(|v| v[c].clone()).collect())
            .collect();
        worst = worst.max(hmod::amplified_norm(&slice)?);
    }
    Ok(worst)
}

/// `η^X(x) = x ⊗ 1`, modeled as `(x|_{F_i})ᵢ`.
pub fn eta_x(x: &ModuleVector, cover: &ClosedCover) -> Result<BVector> {
    cover.check_algebra(x.module().algebra())?;
    Ok(BVector {
        parts: cover.sets().iter().map(|s| x.restrict(s)).collect::<Result<_>>()?,
    })
}

/// `η^Z(z)`: component `(i,j)` is `z_i|_{F_ij}`.
pub fn eta_z(pair: &PairTensorModel, z: &BVector) -> Result<ModelVector> {
    require_arity(pair, 2)?;
    check_bvector(pair.z(), z)?;
    let comps = pair
        .tuples
        .iter()
        .zip(&pair.comps)
        .map(|(t, m)| z.parts[t[0]].restrict(m.algebra().labels()))
        .collect::<Result<_>>()?;
    Ok(ModelVector { comps })
}

/// `φ_ij`: places `v ∈ Z_i|_{F_ij}` at component `(i,j)`.
pub fn phi_embed(pair: &PairTensorModel, i: usize, j: usize, v: &ModuleVector) -> Result<ModelVector> {
    require_arity(pair, 2)?;
    let idx = pair.index_of(&[i, j])?;
    if v.module() != &pair.comps[idx] {
        return Err(Error::invalid(format!("vector is not in Z_{i}|F_{i}{j}")));
    }
    let mut t = pair.zero();
    t.comps[idx] = v.clone();
    Ok(t)
}

/// `δ(z)`: component `(i,j)` is `ζ_ij(z_j|_{F_ij})`.
pub fn delta_map(datum: &GluingDatum, pair: &PairTensorModel, z: &BVector) -> Result<ModelVector> {
    require_arity(pair, 2)?;
    check_datum(datum, pair)?;
    check_bvector(pair.z(), z)?;
    let comps = pair
        .tuples
        .iter()
        .zip(&pair.comps)
        .map(|(t, m)| datum.apply_zeta(t[0], t[1], &z.parts[t[1]].restrict(m.algebra().labels())?))
        .collect::<Result<_>>()?;
    Ok(ModelVector { comps })
}

/// `ε(t)_i = t_{(i,i)}`.
pub fn epsilon_map(pair: &PairTensorModel, t: &ModelVector) -> Result<BVector> {
    require_arity(pair, 2)?;
    pair.check(t)?;
    let n = pair.z().cover().len();
    Ok(BVector {
        parts: (0..n).map(|i| t.comps[i * n + i].clone()).collect(),
    })
}

/// The one-leg amplifications `Z ⊗ B → Z ⊗ B ⊗ B`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LiftKind {
    /// `η^Z ⊗ id`: `(i,j,l) ← t_{(i,l)}`.
    EtaTensorId,
    /// `id ⊗ η^B`: `(i,j,l) ← t_{(i,j)}`.
    IdTensorEtaB,
    /// `δ ⊗ id`: `(i,j,l) ← ζ_ij(t_{(j,l)})`.
    DeltaTensorId,
}

pub fn lift_to_triple(
    kind: LiftKind,
    datum: &GluingDatum,
    pair: &PairTensorModel,
    triple: &TripleTensorModel,
    t: &ModelVector,
) -> Result<ModelVector> {
    require_arity(pair, 2)?;
    require_arity(triple, 3)?;
    check_datum(datum, pair)?;
    if triple.z() != pair.z() {
        return Err(Error::invalid("pair and triple models are over different modules"));
    }
    pair.check(t)?;
    let comps = triple
        .tuples
        .iter()
        .zip(&triple.comps)
        .map(|(tup, m)| {
            let (i, j, l) = (tup[0], tup[1], tup[2]);
            let labels = m.algebra().labels();
            match kind {
                LiftKind::EtaTensorId => t.comps[pair.index_of(&[i, l])?].restrict(labels),
                LiftKind::IdTensorEtaB => t.comps[pair.index_of(&[i, j])?].restrict(labels),
                LiftKind::DeltaTensorId => {
                    datum.apply_zeta(i, j, &t.comps[pair.index_of(&[j, l])?].restrict(labels)?)
                }
            }
        })
        .collect::<Result<_>>()?;
    Ok(ModelVector { comps })
}

/// `η^X ⊗ id` on `X ⊗ B ≅ ⊕ᵢ X|_{F_i}`: component `(i,j)` is `s_j|_{F_ij}`.
pub fn x_eta_tensor_id(pair: &PairTensorModel, s: &BVector) -> Result<ModelVector> {
    x_lift(pair, s, 1)
}

/// `id ⊗ η^B` on `X ⊗ B`: component `(i,j)` is `s_i|_{F_ij}`.
pub fn x_id_tensor_eta_b(pair: &PairTensorModel, s: &BVector) -> Result<ModelVector> {
    x_lift(pair, s, 0)
}

fn x_lift(pair: &PairTensorModel, s: &BVector, leg: usize) -> Result<ModelVector> {
    require_arity(pair, 2)?;
    check_bvector(pair.z(), s)?;
    let comps = pair
        .tuples
        .iter()
        .zip(&pair.comps)
        .map(|(t, m)| s.parts[t[leg]].restrict(m.algebra().labels()))
        .collect::<Result<_>>()?;
    Ok(ModelVector { comps })
}

/// Coordinate matrix of `η^Z`.
pub fn eta_z_matrix(pair: &PairTensorModel) -> Result<CMatrix> {
    let z = pair.z();
    matrix_of_linear(z.dim(), pair.dim(), |c| Ok(eta_z(pair, &z.from_coords(c)?)?.coords()))
}

/// Coordinate matrix of `δ`.
pub fn delta_matrix(datum: &GluingDatum, pair: &PairTensorModel) -> Result<CMatrix> {
    let z = pair.z();
    matrix_of_linear(z.dim(), pair.dim(), |c| {
        Ok(delta_map(datum, pair, &z.from_coords(c)?)?.coords())
    })
}

/// Coordinate matrix of a one-leg lift.
pub fn lift_matrix(
    kind: LiftKind,
    datum: &GluingDatum,
    pair: &PairTensorModel,
    triple: &TripleTensorModel,
) -> Result<CMatrix> {
    matrix_of_linear(pair.dim(), triple.dim(), |c| {
        Ok(lift_to_triple(kind, datum, pair, triple, &pair.from_coords(c)?)?.coords())
    })
}

fn require_arity(m: &TensorModel, r: usize) -> Result<()> {
    if m.arity == r {
        Ok(())
    } else {
        Err(Error::invalid(format!("expected a model of arity {r}, got {}", m.arity)))
    }
}

fn check_bvector(z: &BModule, v: &BVector) -> Result<()> {
    if z.contains(v) {
        Ok(())
    } else {
        Err(Error::invalid("vector does not belong to the B-module"))
    }
}

fn check_datum(datum: &GluingDatum, m: &TensorModel) -> Result<()> {
    if datum.modules() == m.z() {
        Ok(())
    } else {
        Err(Error::invalid("gluing datum and tensor model are over different modules"))
    }
}

// ---------------------------------------------------------------------------
// Coordinate layouts shared by the evaluators.

/// Flat coordinates of an algebra element (blocks in order, row-major).
pub fn element_coords(a: &AlgebraElement) -> Vec<C64> {
    a.blocks().iter().flat_map(|b| b.as_slice().to_vec()).collect()
}

pub fn element_from_coords(alg: &FdCStarAlgebra, coords: &[C64]) -> Result<AlgebraElement> {
    if coords.len() != alg.dimension() {
        return Err(Error::invalid("coordinate count does not match algebra"));
    }
    let mut at = 0;
    let mut blocks = Vec::with_capacity(alg.num_blocks());
    for &n in alg.dims() {
        blocks.push(CMatrix::from_row_major(n, n, coords[at..at + n * n].to_vec())?);
        at += n * n;
    }
    AlgebraElement::new(alg.clone(), blocks)
}

pub fn b_coords(b: &BElement) -> Vec<C64> {
    b.parts.iter().flat_map(element_coords).collect()
}

pub fn b_from_coords(b: &SumAlgebraB, coords: &[C64]) -> Result<BElement> {
    if coords.len() != b.dimension() {
        return Err(Error::invalid("coordinate count does not match B"));
    }
    let mut at = 0;
    let mut parts = Vec::with_capacity(b.parts().len());
    for p in b.parts() {
        parts.push(element_from_coords(p, &coords[at..at + p.dimension()])?);
        at += p.dimension();
    }
    Ok(BElement { parts })
}

/// Offset of block `k` of part `i` in the flattened coordinates of `B`.
fn b_block_offsets(b: &SumAlgebraB) -> HashMap<(usize, usize), usize> {
    let mut out = HashMap::new();
    let mut at = 0;
    for (i, p) in b.parts().iter().enumerate() {
        for (&k, &n) in p.labels().iter().zip(p.dims()) {
            out.insert((i, k), at);
            at += n * n;
        }
    }
    out
}

/// Offset of block `k` in a module's flattened coordinates.
fn module_block_offset(x: &HilbertModule, k: usize) -> Option<usize> {
    x.algebra().position(k).map(|p| x.block_offsets()[p])
}

/// A family of modules over restrictions of `A`, stacked into one Hilbert
/// A-module. Each flattened coordinate of the stack is mapped back to
/// `(component, local coordinate)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StackedModule {
    pub module: HilbertModule,
    pub origin: Vec<(usize, usize)>,
}

pub fn stack_as_a_module(base: &FdCStarAlgebra, comps: &[HilbertModule]) -> Result<StackedModule> {
    for c in comps {
        base.check_subset(c.algebra().labels())?;
    }
    let mult: Vec<usize> = base
        .labels()
        .iter()
        .map(|&k| comps.iter().map(|c| c.mult_of(k).unwrap_or(0)).sum())
        .collect();
    let module = HilbertModule::new(base.clone(), mult)?;
    let mut origin = Vec::with_capacity(module.dim());
    for (&k, &n) in base.labels().iter().zip(base.dims()) {
        for (ci, c) in comps.iter().enumerate() {
            let Some(off) = module_block_offset(c, k) else { continue };
            let m = c.mult_of(k).unwrap();
            for r in 0..m {
                for s in 0..n {
                    origin.push((ci, off + r * n + s));
                }
            }
        }
    }
    Ok(StackedModule { module, origin })
}

// ---------------------------------------------------------------------------
// Left actions and the balanced tensor oracle.

/// A left action of `A` on a coordinate space, given by the images of the
/// matrix units in [`FdCStarAlgebra::matrix_units`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct LeftAction {
    algebra: FdCStarAlgebra,
    dim: usize,
    images: Vec<CMatrix>,
}

impl LeftAction {
    pub fn new(algebra: FdCStarAlgebra, dim: usize, images: Vec<CMatrix>) -> Result<Self> {
        if images.len() != algebra.dimension() {
            return Err(Error::invalid("left action needs one image per matrix unit"));
        }
        if images.iter().any(|m| m.shape() != (dim, dim)) {
            return Err(Error::invalid("left action images have the wrong shape"));
        }
        Ok(LeftAction { algebra, dim, images })
    }

    /// Builds the images from a function evaluated on each matrix unit.
    pub fn from_fn<F>(algebra: &FdCStarAlgebra, dim: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(&AlgebraElement) -> Result<CMatrix>,
    {
        let images = algebra
            .matrix_units()
            .into_iter()
            .map(|(p, r, c)| f(&AlgebraElement::unit(algebra, p, r, c)))
            .collect::<Result<_>>()?;
        Self::new(algebra.clone(), dim, images)
    }

    /// `A` acting on `B` by `a·b = η(a) b`.
    pub fn on_b(a: &FdCStarAlgebra, b: &SumAlgebraB) -> Result<Self> {
        if b.base() != a {
            return Err(Error::invalid("B is built over a different algebra"));
        }
        Self::from_fn(a, b.dimension(), |e| {
            let eb = crate::cstar::eta_embed(a, b.cover(), e)?;
            matrix_of_linear(b.dimension(), b.dimension(), |c| {
                Ok(b_coords(&eb.mul(&b_from_coords(b, c)?)?))
            })
        })
    }

    /// `A` acting on `A|_F` by `a·w = a|_F w`.
    pub fn on_quotient(a: &FdCStarAlgebra, set: &[usize]) -> Result<Self> {
        let q = a.restrict(set)?;
        Self::from_fn(a, q.dimension(), |e| {
            let er = e.restrict(set)?;
            matrix_of_linear(q.dimension(), q.dimension(), |c| {
                Ok(element_coords(&er.mul(&element_from_coords(&q, c)?)?))
            })
        })
    }

    pub fn algebra(&self) -> &FdCStarAlgebra {
        &self.algebra
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn images(&self) -> &[CMatrix] {
        &self.images
    }

    /// `λ(a)` as a matrix.
    pub fn matrix_of(&self, a: &AlgebraElement) -> Result<CMatrix> {
        if a.algebra() != &self.algebra {
            return Err(Error::invalid("element of another algebra"));
        }
        let mut out = CMatrix::zeros(self.dim, self.dim);
        for ((p, r, c), img) in self.algebra.matrix_units().into_iter().zip(&self.images) {
            let coeff = a.blocks()[p][(r, c)];
            if coeff != ZERO {
                out = &out + &img.scale(coeff);
            }
        }
        Ok(out)
    }

    /// Prim label of each coordinate, read off from the central
    /// projections. `None` when the projections are not diagonal 0/1
    /// matrices summing to the identity.
    pub fn coord_labels(&self) -> Option<Vec<usize>> {
        let mut labels = vec![usize::MAX; self.dim];
        for (p, &k) in self.algebra.labels().iter().enumerate() {
            let proj = self.matrix_of(&AlgebraElement::central_projection(&self.algebra, p)).ok()?;
            for r in 0..self.dim {
                for c in 0..self.dim {
                    let z = proj[(r, c)];
                    if r == c && (z - ONE).norm() < 1e-12 {
                        if labels[r] != usize::MAX {
                            return None;
                        }
                        labels[r] = k;
                    } else if z.norm() > 1e-12 {
                        return None;
                    }
                }
            }
        }
        if labels.contains(&usize::MAX) {
            None
        } else {
            Some(labels)
        }
    }
}

/// One label-pair block of the balanced quotient.
#[derive(Clone, Debug, PartialEq)]
struct QuotientBlock {
    plain: Vec<usize>,
    basis: CMatrix,
    gram: CMatrix,
}

/// `X ⊗_A W` built the slow way: the plain coordinate tensor space
/// `X ⊗ W` (index `a·dim W + w`) modulo the balancing relations
/// `x·a ⊗ w − x ⊗ a·w`, with the inner product `⟨x⊗w|x'⊗w'⟩ = ⟨w|λ(⟨x|x'⟩)w'⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct GenericBalancedTensor {
    left: HilbertModule,
    right_dim: usize,
    blocks: Vec<QuotientBlock>,
}

/// How well a model evaluator matches the oracle quotient.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleAgreement {
    pub oracle_dim: usize,
    pub model_dim: usize,
    /// `‖M (I − QQ*)‖`: the evaluator kills the balancing relations.
    pub well_defined_residual: f64,
    /// `‖(MQ)*(MQ) − Q*GQ‖`: the evaluator carries the oracle inner product.
    pub isometry_residual: f64,
    /// Unitarity defect of `MQ (Q*GQ)^{-1/2}`; infinite if it cannot be formed.
    pub intertwiner_residual: f64,
    /// Smallest eigenvalue of the oracle Gram matrix.
    pub gram_min: f64,
}

impl OracleAgreement {
    pub fn dims_match(&self) -> bool {
        self.oracle_dim == self.model_dim
    }

    pub fn max_residual(&self) -> f64 {
        self.well_defined_residual
            .max(self.isometry_residual)
            .max(self.intertwiner_residual)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.dims_match() && self.max_residual() <= tol
    }
}

pub fn generic_balanced_tensor(left: &HilbertModule, right: &LeftAction) -> Result<GenericBalancedTensor> {
    let a = left.algebra();
    if a != right.algebra() {
        return Err(Error::invalid("balanced tensor over mismatched middle algebras"));
    }
    let dx = left.dim();
    let dw = right.dim();
    let xl = coord_labels(left);
    let wl = right.coord_labels().unwrap_or_else(|| vec![usize::MAX; dw]);
    let units = a.matrix_units();
    let rhos: Vec<CMatrix> = units
        .iter()
        .map(|&(p, r, c)| left.right_action_matrix(&AlgebraElement::unit(a, p, r, c)))
        .collect::<Result<_>>()?;

    let mut keys: Vec<(usize, usize)> = Vec::new();
    for &kx in &xl {
        for &kw in &wl {
            if !keys.contains(&(kx, kw)) {
                keys.push((kx, kw));
            }
        }
    }
    keys.sort_unstable();
    let xs_of = |k: usize| (0..dx).filter(|&i| xl[i] == k).collect::<Vec<_>>();
    let ws_of = |k: usize| (0..dw).filter(|&i| wl[i] == k).collect::<Vec<_>>();

    let mut blocks = Vec::new();
    for (kx, kw) in keys {
        let xs = xs_of(kx);
        let ws = ws_of(kw);
        let size = xs.len() * ws.len();
        let mut s = CMatrix::zeros(size, size);
        for (rho, lam) in rhos.iter().zip(right.images()) {
            let r = CMatrix::from_fn(xs.len(), xs.len(), |i, j| rho[(xs[i], xs[j])]);
            let l = CMatrix::from_fn(ws.len(), ws.len(), |i, j| lam[(ws[i], ws[j])]);
            if r.max_abs() == 0.0 && l.max_abs() == 0.0 {
                continue;
            }
            let ix = CMatrix::identity(xs.len());
            let iw = CMatrix::identity(ws.len());
            // The relations x·e ⊗ w − x ⊗ e·w span the range of
            // D = ρ⊗I − I⊗λ, so the complement is the kernel of Σ D D*.
            let d = &r.kron(&iw) - &ix.kron(&l);
            s = &s + &d.matmul(&d.adjoint());
        }
        let q = kernel_basis(&s, DEFAULT_RANK_TOL)?;
        let plain: Vec<usize> = xs
            .iter()
            .flat_map(|&i| ws.iter().map(move |&w| i * dw + w))
            .collect();
        // Gram on this block: ⟨x_a⊗w|x_c⊗w'⟩ = λ(⟨x_a|x_c⟩)[w, w'].
        let mut g = CMatrix::zeros(size, size);
        let xbasis = left.basis();
        for (ia, &a_) in xs.iter().enumerate() {
            for (ic, &c_) in xs.iter().enumerate() {
                let ip = hmod::inner_product(&xbasis[a_], &xbasis[c_])?;
                if ip.blocks().iter().all(|b| b.max_abs() == 0.0) {
                    continue;
                }
                let lam = right.matrix_of(&ip)?;
                for (iw, &w) in ws.iter().enumerate() {
                    for (iw2, &w2) in ws.iter().enumerate() {
                        g[(ia * ws.len() + iw, ic * ws.len() + iw2)] = lam[(w, w2)];
                    }
                }
            }
        }
        let gram = q.adjoint().matmul(&g).matmul(&q);
        blocks.push(QuotientBlock { plain, basis: q, gram });
    }
    Ok(GenericBalancedTensor {
        left: left.clone(),
        right_dim: dw,
        blocks,
    })
}

impl GenericBalancedTensor {
    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.basis.cols()).sum()
    }

    pub fn plain_dim(&self) -> usize {
        self.left.dim() * self.right_dim
    }

    pub fn relation_rank(&self) -> usize {
        self.plain_dim() - self.dim()
    }

    /// Orthonormal basis `Q` (plain dim × quotient dim) of the complement of
    /// the relations.
    pub fn quotient_basis(&self) -> CMatrix {
        let mut q = CMatrix::zeros(self.plain_dim(), self.dim());
        let mut col = 0;
        for b in &self.blocks {
            for c in 0..b.basis.cols() {
                for (r, &p) in b.plain.iter().enumerate() {
                    q[(p, col + c)] = b.basis[(r, c)];
                }
            }
            col += b.basis.cols();
        }
        q
    }

    /// `Q* G Q`.
    pub fn gram(&self) -> CMatrix {
        CMatrix::block_diag(&self.blocks.iter().map(|b| b.gram.clone()).collect::<Vec<_>>())
    }

    /// Compares a model evaluator `M` (model dim × plain dim) against the
    /// quotient.
    pub fn compare(&self, evaluator: &CMatrix) -> Result<OracleAgreement> {
        if evaluator.cols() != self.plain_dim() {
            return Err(Error::invalid("evaluator does not act on the plain tensor space"));
        }
        let q = self.quotient_basis();
        let g = self.gram();
        let mq = evaluator.matmul(&q);
        let well_defined_residual = (evaluator - &mq.matmul(&q.adjoint())).max_abs();
        let gram_min = singular_values(&g)?.last().copied().unwrap_or(f64::INFINITY);
        let mut out = OracleAgreement {
            oracle_dim: self.dim(),
            model_dim: evaluator.rows(),
            well_defined_residual,
            isometry_residual: f64::INFINITY,
            intertwiner_residual: f64::INFINITY,
            gram_min,
        };
        if !out.dims_match() {
            return Ok(out);
        }
        out.isometry_residual = (&mq.adjoint_mul(&mq) - &g).max_abs();
        if gram_min > 0.0 {
            let u = mq.matmul(&inverse_sqrt_hermitian(&g)?);
            out.intertwiner_residual = unitarity_residual(&u).unwrap_or(f64::INFINITY);
        } else if self.dim() == 0 {
            out.intertwiner_residual = 0.0;
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Evaluators of the models on plain tensors.

/// `Ψ^X` and its pieces.
#[derive(Clone, Debug, PartialEq)]
pub struct PsiIso {
    /// `⊕ᵢ X|_{F_i}`.
    pub model: BModule,
    pub b: SumAlgebraB,
    /// Plain `X ⊗ B` coordinates to model coordinates.
    pub evaluator: CMatrix,
}

/// `Ψ^X: x ⊗ b ↦ (x|_{F_i} bᵢ)`.
pub fn psi_apply(x: &ModuleVector, b: &BElement, cover: &ClosedCover) -> Result<BVector> {
    eta_x(x, cover)?.right_act(b)
}

pub fn psi_iso(x: &HilbertModule, cover: &ClosedCover) -> Result<PsiIso> {
    let model = BModule::pulled_apart(x, cover)?;
    let b = SumAlgebraB::new(x.algebra(), cover)?;
    let single = TensorModel::single(&model)?;
    let lower = vec![(Vec::new(), x.clone())];
    let evaluator = tensor_b_evaluator(&lower, &b, &single)?;
    Ok(PsiIso { model, b, evaluator })
}

/// Evaluator for `(lower) ⊗_A B → upper`, where the lower family is given by
/// tuples with their component modules and `upper` has arity one more. The
/// plain space is (lower stacked as an A-module) ⊗ (B coordinates). A plain
/// basis tensor `e ⊗ u` with `e` a unit of component `c` at block `k`,
/// position `(r, s)` and `u` the unit of `B` at part `l`, block `k`,
/// position `(s, t)` goes to the unit at component `(c, l)`, block `k`,
/// position `(r, t)`.
fn tensor_b_evaluator(
    lower: &[(Vec<usize>, HilbertModule)],
    b: &SumAlgebraB,
    upper: &TensorModel,
) -> Result<CMatrix> {
    let base = b.base();
    let comps: Vec<HilbertModule> = lower.iter().map(|(_, m)| m.clone()).collect();
    let stacked = stack_as_a_module(base, &comps)?;
    let boff = b_block_offsets(b);
    let uoff = upper.offsets();
    let db = b.dimension();
    let mut m = CMatrix::zeros(upper.dim(), stacked.module.dim() * db);
    for (a, &(ci, loc)) in stacked.origin.iter().enumerate() {
        let (tuple, comp) = &lower[ci];
        // Locate the block, row and column of the local coordinate.
        let (k, r, s, n) = locate(comp, loc);
        for l in 0..b.cover().len() {
            let Some(&bo) = boff.get(&(l, k)) else { continue };
            let mut up = tuple.clone();
            up.push(l);
            let ui = upper.index_of(&up)?;
            let ucomp = &upper.components()[ui];
            let Some(ub) = module_block_offset(ucomp, k) else { continue };
            for t in 0..n {
                let row = uoff[ui] + ub + r * n + t;
                let col = a * db + bo + s * n + t;
                m[(row, col)] = ONE;
            }
        }
    }
    Ok(m)
}

/// `(label, row, col, n)` of a flattened module coordinate.
fn locate(x: &HilbertModule, loc: usize) -> (usize, usize, usize, usize) {
    let offs = x.block_offsets();
    for (p, &k) in x.algebra().labels().iter().enumerate().rev() {
        let (m, n) = x.block_shape(p);
        if m * n > 0 && loc >= offs[p] {
            let rel = loc - offs[p];
            return (k, rel / n, rel % n, n);
        }
    }
    unreachable!("coordinate outside module")
}

/// Oracle data for a model `upper` of `(lower) ⊗_A B`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelOracle {
    pub left: HilbertModule,
    pub right: LeftAction,
    pub evaluator: CMatrix,
}

impl ModelOracle {
    pub fn check(&self) -> Result<OracleAgreement> {
        generic_balanced_tensor(&self.left, &self.right)?.compare(&self.evaluator)
    }
}

/// Oracle setup for `X ⊗_A B ≅ ⊕ᵢ X|_{F_i}`.
pub fn psi_oracle(x: &HilbertModule, cover: &ClosedCover) -> Result<ModelOracle> {
    let psi = psi_iso(x, cover)?;
    Ok(ModelOracle {
        left: x.clone(),
        right: LeftAction::on_b(x.algebra(), &psi.b)?,
        evaluator: psi.evaluator,
    })
}

/// Oracle setup for the model of arity `r+1` as `(arity r model) ⊗_A B`.
pub fn model_oracle(upper: &TensorModel) -> Result<ModelOracle> {
    if upper.arity() < 2 {
        return Err(Error::invalid("oracle needs a model of arity at least 2"));
    }
    let lower_model = TensorModel::new(upper.z(), upper.arity() - 1)?;
    let lower: Vec<(Vec<usize>, HilbertModule)> = lower_model
        .tuples()
        .iter()
        .cloned()
        .zip(lower_model.components().iter().cloned())
        .collect();
    let b = SumAlgebraB::new(upper.z().base(), upper.z().cover())?;
    let evaluator = tensor_b_evaluator(&lower, &b, upper)?;
    let stacked = stack_as_a_module(upper.z().base(), lower_model.components())?;
    Ok(ModelOracle {
        left: stacked.module,
        right: LeftAction::on_b(upper.z().base(), &b)?,
        evaluator,
    })
}

/// `ν^Y_ij: Y ⊗_A A|_{F_j} → Y|_{F_ij}`, `y ⊗ a ↦ y|_{F_ij} a|_{F_ij}`.
#[derive(Clone, Debug, PartialEq)]
pub struct NuIso {
    /// `Y` viewed over `A` (zero outside `F_i`).
    pub left: HilbertModule,
    pub set_j: Vec<usize>,
    /// `Y|_{F_ij}`.
    pub target: HilbertModule,
    pub evaluator: CMatrix,
}

pub fn nu_iso(a: &FdCStarAlgebra, y: &HilbertModule, set_j: &[usize]) -> Result<NuIso> {
    let left = y.extend_by_zero(a)?;
    let q = a.restrict(set_j)?;
    let overlap: Vec<usize> = y
        .algebra()
        .labels()
        .iter()
        .copied()
        .filter(|k| q.position(*k).is_some())
        .collect();
    let target = y.restrict(&overlap)?;
    let dq = q.dimension();
    let mut qoff = HashMap::new();
    let mut at = 0;
    for (&k, &n) in q.labels().iter().zip(q.dims()) {
        qoff.insert(k, at);
        at += n * n;
    }
    let mut m = CMatrix::zeros(target.dim(), left.dim() * dq);
    for a_ in 0..left.dim() {
        let (k, r, s, n) = locate(&left, a_);
        let (Some(&qo), Some(tb)) = (qoff.get(&k), module_block_offset(&target, k)) else { continue };
        for t in 0..n {
            m[(tb + r * n + t, a_ * dq + qo + s * n + t)] = ONE;
        }
    }
    Ok(NuIso {
        left,
        set_j: normalize(set_j),
        target,
        evaluator: m,
    })
}

fn normalize(s: &[usize]) -> Vec<usize> {
    crate::cstar::normalize_set(s)
}

impl NuIso {
    /// `ν(y ⊗ a)` for `y ∈ Y` (over `A`) and `a ∈ A|_{F_j}`.
    pub fn apply(&self, y: &ModuleVector, a: &AlgebraElement) -> Result<ModuleVector> {
        if y.module() != &self.left {
            return Err(Error::invalid("vector is not in Y"));
        }
        let plain = kron_coords(&y.coords(), &element_coords(a));
        let out: Vec<C64> = self.evaluator.matmul(&CMatrix::column_vector(plain)).into_vec();
        ModuleVector::from_coords(&self.target, &out)
    }

    /// A plain tensor mapping to `v`: `v` (extended by zero) `⊗ 1|_{F_j}`.
    pub fn preimage(&self, v: &ModuleVector) -> Result<Vec<C64>> {
        if v.module() != &self.target {
            return Err(Error::invalid("vector is not in Y|_F_ij"));
        }
        let mut y = ModuleVector::zero(&self.left).coords();
        for (p, &k) in self.target.algebra().labels().iter().enumerate() {
            let off = module_block_offset(&self.left, k).unwrap();
            let blk = &v.blocks()[p];
            for (i, z) in blk.as_slice().iter().enumerate() {
                y[off + i] = *z;
            }
        }
        let q = self.left.algebra().restrict(&self.set_j)?;
        let one = element_coords(&AlgebraElement::identity(&q));
        Ok(kron_coords(&y, &one))
    }

    pub fn oracle(&self) -> Result<ModelOracle> {
        Ok(ModelOracle {
            left: self.left.clone(),
            right: LeftAction::on_quotient(self.left.algebra(), &self.set_j)?,
            evaluator: self.evaluator.clone(),
        })
    }
}

pub fn kron_coords(x: &[C64], w: &[C64]) -> Vec<C64> {
    x.iter().flat_map(|&a| w.iter().map(move |&b| a * b)).collect()
}

/// Kernel of a label-preserving map between models, computed per label.
pub fn model_kernel(m: &CMatrix, in_labels: &[usize], out_labels: &[usize], tol: f64) -> Result<CMatrix> {
    let (basis, cross) = labelled_kernel_basis(m, in_labels, out_labels, tol)?;
    if cross > 0.0 {
        return Err(Error::ModelViolation {
            what: "map mixes coordinates of different blocks".into(),
            residual: cross,
        });
    }
    Ok(basis)
}
