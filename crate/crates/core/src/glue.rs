//! Gluing data, the pull-apart functor `P`, the gluing functor `G` and the
//! natural unitaries `Φ: X → G P X` and `ε: P G (Z,ζ) → (Z,ζ)`.
//!
//! A glued module is stored as a Hilbert A-module with multiplicity `d_k`
//! plus, per block `k`, a matrix `E_k` whose slice `E^{(i)}_k` (the rows
//! belonging to set `i`) sends the block-`k` part of a glued vector into
//! `Z_i`. Each slice is an isometry, so the embedding is isometric for the
//! B-module norm.

use std::collections::BTreeMap;

use crate::cstar::{eta_image_residual, ClosedCover, FdCStarAlgebra};
use crate::error::{Error, Result};
use crate::gen::{random_bvector, random_vector, SplitMix64};
use crate::hmod::{compose, AdjointableMap, BModule, BVector, HilbertModule, ModuleVector};
use crate::numlin::{kernel_basis, labelled_subspace_distance, norm, range_basis, svd, unitarity_residual, CMatrix};
use crate::tensor::{self, LiftKind, TensorModel};

/// Local modules `Z_i` over `A|_{F_i}` and transition matrices
/// `U^{ij}_k: Z_j → Z_i` at every shared block `k ∈ F_ij`.
#[derive(Clone, Debug, PartialEq)]
pub struct GluingDatum {
    modules: BModule,
    zeta: BTreeMap<(usize, usize, usize), CMatrix>,
}

impl GluingDatum {
    /// Builds a datum from explicitly given transitions. A given `(i,j,k)`
    /// also fixes `(j,i,k)` to its adjoint unless that entry is given too.
    /// Diagonal pairs default to the identity, and unlisted off-diagonal
    /// pairs default to the identity when the shapes allow it.
    pub fn new(modules: BModule, entries: Vec<((usize, usize, usize), CMatrix)>) -> Result<Self> {
        let mut given: BTreeMap<(usize, usize, usize), CMatrix> = BTreeMap::new();
        for ((i, j, k), u) in entries {
            if given.insert((i, j, k), u).is_some() {
                return Err(Error::invalid(format!("transition ({i},{j}) at block {k} given twice")));
            }
        }
        let mut d = GluingDatum::identity(modules)?;
        for (&(i, j, k), u) in &given {
            d.check_entry(i, j, k, u)?;
            d.zeta.insert((i, j, k), u.clone());
            if !given.contains_key(&(j, i, k)) {
                d.zeta.insert((j, i, k), u.adjoint());
            }
        }
        Ok(d)
    }

    /// All transitions equal to the identity where shapes allow.
    fn identity(modules: BModule) -> Result<Self> {
        let cover = modules.cover().clone();
        let mut zeta = BTreeMap::new();
        for i in 0..cover.len() {
            for j in 0..cover.len() {
                for k in cover.overlap(&[i, j]) {
                    let (mi, mj) = (modules.mult(i, k).unwrap(), modules.mult(j, k).unwrap());
                    if mi == mj {
                        zeta.insert((i, j, k), CMatrix::identity(mi));
                    }
                }
            }
        }
        Ok(GluingDatum { modules, zeta })
    }

    fn check_entry(&self, i: usize, j: usize, k: usize, u: &CMatrix) -> Result<()> {
        let n = self.cover().len();
        if i >= n || j >= n {
            return Err(Error::invalid(format!("transition ({i},{j}) for a cover with {n} sets")));
        }
        if !self.cover().overlap(&[i, j]).contains(&k) {
            return Err(Error::invalid(format!("block {k} is not in F_{i} ∩ F_{j}")));
        }
        let shape = (self.modules.mult(i, k).unwrap(), self.modules.mult(j, k).unwrap());
        if u.shape() != shape {
            return Err(Error::invalid(format!(
                "transition ({i},{j}) at block {k} is {:?}, expected {shape:?}",
                u.shape()
            )));
        }
        u.check_finite()
    }

    /// Transitions that are still undetermined (shapes differ and nothing
    /// was given).
    pub fn missing(&self) -> Vec<(usize, usize, usize)> {
        let c = self.cover();
        let mut out = Vec::new();
        for i in 0..c.len() {
            for j in 0..c.len() {
                for k in c.overlap(&[i, j]) {
                    if !self.zeta.contains_key(&(i, j, k)) {
                        out.push((i, j, k));
                    }
                }
            }
        }
        out
    }

    /// Replaces `U^{ij}_k` and, for `i ≠ j`, sets `U^{ji}_k` to its adjoint.
    pub fn set_zeta(&mut self, i: usize, j: usize, k: usize, u: CMatrix) -> Result<()> {
        self.check_entry(i, j, k, &u)?;
        if i != j {
            self.zeta.insert((j, i, k), u.adjoint());
        }
        self.zeta.insert((i, j, k), u);
        Ok(())
    }

    pub fn modules(&self) -> &BModule {
        &self.modules
    }

    pub fn cover(&self) -> &ClosedCover {
        self.modules.cover()
    }

    pub fn base(&self) -> &FdCStarAlgebra {
        self.modules.base()
    }

    pub fn zeta(&self, i: usize, j: usize, k: usize) -> Option<&CMatrix> {
        self.zeta.get(&(i, j, k))
    }

    /// All transitions, keyed by `(i, j, k)` in lexicographic order.
    pub fn zeta_entries(&self) -> impl Iterator<Item = (&(usize, usize, usize), &CMatrix)> {
        self.zeta.iter()
    }

    fn require_complete(&self) -> Result<()> {
        match self.missing().first() {
            None => Ok(()),
            Some((i, j, k)) => Err(Error::invalid(format!(
                "no transition ({i},{j}) at block {k} and the multiplicities differ"
            ))),
        }
    }

    /// `ζ_ij` restricted to a subset `S ⊆ F_ij`, as a map `Z_j|_S → Z_i|_S`.
    pub fn zeta_map(&self, i: usize, j: usize, set: &[usize]) -> Result<AdjointableMap> {
        let src = self.modules.part(j).restrict(set)?;
        let tgt = self.modules.part(i).restrict(set)?;
        let blocks = src
            .algebra()
            .labels()
            .iter()
            .map(|&k| {
                self.zeta(i, j, k)
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("no transition ({i},{j}) at block {k}")))
            })
            .collect::<Result<_>>()?;
        AdjointableMap::new(src, tgt, blocks)
    }

    /// `ζ_ij(v)` for `v ∈ Z_j|_S`, `S ⊆ F_ij`.
    pub fn apply_zeta(&self, i: usize, j: usize, v: &ModuleVector) -> Result<ModuleVector> {
        let labels = v.module().algebra().labels();
        if v.module() != &self.modules.part(j).restrict(labels)? {
            return Err(Error::invalid(format!("vector is not in a restriction of Z_{j}")));
        }
        let tgt = self.modules.part(i).restrict(labels)?;
        let blocks = labels
            .iter()
            .zip(v.blocks())
            .map(|(&k, b)| {
                self.zeta(i, j, k)
                    .map(|u| u.matmul(b))
                    .ok_or_else(|| Error::invalid(format!("no transition ({i},{j}) at block {k}")))
            })
            .collect::<Result<_>>()?;
        ModuleVector::new(tgt, blocks)
    }
}

/// Outcome of [`validate_gluing_datum`]. Residuals are operator norms.
#[derive(Clone, Debug, PartialEq)]
pub struct DatumReport {
    pub unitary: bool,
    pub involutive: bool,
    pub cocycle: bool,
    pub unitary_residual: f64,
    /// Covers `ζ_ii = id` and `ζ_ij* = ζ_ji`.
    pub involutive_residual: f64,
    pub cocycle_residual: f64,
}

impl DatumReport {
    /// Unitarity and involutivity are requirements; the cocycle is not.
    pub fn is_valid(&self) -> bool {
        self.unitary && self.involutive
    }

    pub fn max_residual(&self) -> f64 {
        self.unitary_residual
            .max(self.involutive_residual)
            .max(self.cocycle_residual)
    }
}

pub fn validate_gluing_datum(d: &GluingDatum, tol: f64) -> Result<DatumReport> {
    d.require_complete()?;
    let c = d.cover();
    let n = c.len();
    let mut unitary_residual: f64 = 0.0;
    let mut involutive_residual: f64 = 0.0;
    let mut cocycle_residual: f64 = 0.0;
    for (&(i, j, k), u) in d.zeta_entries() {
        unitary_residual = unitary_residual.max(unitarity_residual(u).unwrap_or(f64::INFINITY));
        if i == j {
            involutive_residual = involutive_residual.max(norm(&(u - &CMatrix::identity(u.rows()))));
        } else {
            let back = d.zeta(j, i, k).unwrap();
            involutive_residual = involutive_residual.max(norm(&(&u.adjoint() - back)));
        }
    }
    for i in 0..n {
        for j in 0..n {
            for l in 0..n {
                for k in c.overlap(&[i, j, l]) {
                    let lhs = d.zeta(i, j, k).unwrap().matmul(d.zeta(j, l, k).unwrap());
                    cocycle_residual = cocycle_residual.max(norm(&(&lhs - d.zeta(i, l, k).unwrap())));
                }
            }
        }
    }
    Ok(DatumReport {
        unitary: unitary_residual <= tol,
        involutive: involutive_residual <= tol,
        cocycle: cocycle_residual <= tol,
        unitary_residual,
        involutive_residual,
        cocycle_residual,
    })
}

/// `P X = ((X|_{F_i})ᵢ, κ^X)` with `κ^X_ij` the identity on shared blocks.
pub fn pull_apart(x: &HilbertModule, cover: &ClosedCover) -> Result<GluingDatum> {
    GluingDatum::identity(BModule::pulled_apart(x, cover)?)
}

/// A morphism of gluing data: one adjointable map `α_i: Z_i → W_i` per set.
#[derive(Clone, Debug, PartialEq)]
pub struct GlueMorphism {
    pub maps: Vec<AdjointableMap>,
}

impl GlueMorphism {
    pub fn identity(d: &GluingDatum) -> Self {
        GlueMorphism {
            maps: d.modules().parts().iter().map(AdjointableMap::identity).collect(),
        }
    }

    /// `max_i ‖α_i‖`.
    pub fn norm(&self) -> f64 {
        self.maps.iter().map(AdjointableMap::norm).fold(0.0, f64::max)
    }

    pub fn adjoint(&self) -> Self {
        GlueMorphism {
            maps: self.maps.iter().map(crate::hmod::adjoint_of).collect(),
        }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.maps.len() != other.maps.len() {
            return Err(Error::invalid("morphisms over different covers"));
        }
        Ok(GlueMorphism {
            maps: self.maps.iter().zip(&other.maps).map(|(a, b)| compose(a, b)).collect::<Result<_>>()?,
        })
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.maps.len() != other.maps.len() {
            return f64::INFINITY;
        }
        self.maps
            .iter()
            .zip(&other.maps)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }

    /// `max_{i,j} ‖α_i|_{F_ij} ∘ ζ_ij − ω_ij ∘ α_j|_{F_ij}‖`.
    pub fn intertwining_residual(&self, src: &GluingDatum, tgt: &GluingDatum) -> Result<f64> {
        let c = src.cover();
        if tgt.cover() != c || self.maps.len() != c.len() {
            return Err(Error::invalid("morphism, source and target use different covers"));
        }
        for (i, a) in self.maps.iter().enumerate() {
            if a.source() != src.modules().part(i) || a.target() != tgt.modules().part(i) {
                return Err(Error::invalid(format!("map {i} has the wrong source or target")));
            }
        }
        let mut worst: f64 = 0.0;
        for i in 0..c.len() {
            for j in 0..c.len() {
                for k in c.overlap(&[i, j]) {
                    let ai = self.maps[i].block(k).unwrap();
                    let aj = self.maps[j].block(k).unwrap();
                    let lhs = ai.matmul(src.zeta(i, j, k).unwrap());
                    let rhs = tgt.zeta(i, j, k).unwrap().matmul(aj);
                    worst = worst.max(norm(&(&lhs - &rhs)));
                }
            }
        }
        Ok(worst)
    }
}

/// `P α = (α|_{F_i})ᵢ`.
pub fn pull_apart_map(alpha: &AdjointableMap, cover: &ClosedCover) -> Result<GlueMorphism> {
    cover.check_algebra(alpha.source().algebra())?;
    Ok(GlueMorphism {
        maps: cover.sets().iter().map(|s| alpha.restrict(s)).collect::<Result<_>>()?,
    })
}

/// `G(Z,ζ)` as a Hilbert A-module with its embedding into `⊕ᵢ Z_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct GluedModule {
    datum: GluingDatum,
    module: HilbertModule,
    /// Per block position of `A`: `E_k`, rows stacked over the sets
    /// containing `k` in increasing order.
    embedding: Vec<CMatrix>,
}

impl GluedModule {
    pub fn module(&self) -> &HilbertModule {
        &self.module
    }

    pub fn datum(&self) -> &GluingDatum {
        &self.datum
    }

    /// `E_k` for the block at position `p`.
    pub fn embedding(&self, p: usize) -> &CMatrix {
        &self.embedding[p]
    }

    /// The slice `E^{(i)}_k`, or `None` if `k ∉ F_i`.
    pub fn slice(&self, i: usize, k: usize) -> Option<CMatrix> {
        let p = self.module.algebra().position(k)?;
        let sets = self.datum.cover().sets_containing(k);
        let pos = sets.iter().position(|&s| s == i)?;
        let start: usize = sets[..pos].iter().map(|&s| self.datum.modules().mult(s, k).unwrap()).sum();
        let m = self.datum.modules().mult(i, k).unwrap();
        Some(self.embedding[p].rows_range(start..start + m))
    }

    /// `ι(g) = (E^{(i)} g)ᵢ ∈ ⊕ᵢ Z_i`.
    pub fn embed(&self, g: &ModuleVector) -> Result<BVector> {
        if g.module() != &self.module {
            return Err(Error::invalid("vector is not in the glued module"));
        }
        let z = self.datum.modules();
        let parts = (0..z.cover().len())
            .map(|i| {
                let zi = z.part(i);
                let blocks = zi
                    .algebra()
                    .labels()
                    .iter()
                    .map(|&k| self.slice(i, k).unwrap().matmul(g.block(k).unwrap()))
                    .collect();
                ModuleVector::new(zi.clone(), blocks)
            })
            .collect::<Result<_>>()?;
        Ok(BVector { parts })
    }

    /// Left inverse of [`embed`](Self::embed) on its image:
    /// `g_k = (1/c_k) E_k* (z_i)_{i ∋ k}`.
    pub fn project(&self, z: &BVector) -> Result<ModuleVector> {
        if !self.datum.modules().contains(z) {
            return Err(Error::invalid("vector is not in the B-module"));
        }
        let alg = self.module.algebra();
        let blocks = alg
            .labels()
            .iter()
            .enumerate()
            .map(|(p, &k)| {
                let sets = self.datum.cover().sets_containing(k);
                let stack = CMatrix::vstack(&sets.iter().map(|&i| z.parts[i].block(k).unwrap().clone()).collect::<Vec<_>>());
                self.embedding[p].adjoint_mul(&stack).scale_real(1.0 / sets.len() as f64)
            })
            .collect();
        ModuleVector::new(self.module.clone(), blocks)
    }

    /// `ε_i: G|_{F_i} → Z_i`, block `k` given by `E^{(i)}_k`.
    pub fn epsilon_component(&self, i: usize) -> Result<AdjointableMap> {
        let set = self.datum.cover().set(i);
        let src = self.module.restrict(set)?;
        let tgt = self.datum.modules().part(i).clone();
        let blocks = set.iter().map(|&k| self.slice(i, k).unwrap()).collect();
        AdjointableMap::new(src, tgt, blocks)
    }

    /// `max ‖z_i|_{F_ij} − ζ_ij(z_j|_{F_ij})‖` over the embedded basis.
    pub fn constraint_residual(&self) -> f64 {
        let d = &self.datum;
        let c = d.cover();
        let mut worst: f64 = 0.0;
        for i in 0..c.len() {
            for j in 0..c.len() {
                for k in c.overlap(&[i, j]) {
                    let (ei, ej) = (self.slice(i, k).unwrap(), self.slice(j, k).unwrap());
                    worst = worst.max(norm(&(&ei - &d.zeta(i, j, k).unwrap().matmul(&ej))));
                }
            }
        }
        worst
    }

    /// `max_i ‖E^{(i)*}E^{(i)} − I‖`: every slice is an isometry.
    pub fn isometry_residual(&self) -> f64 {
        let c = self.datum.cover();
        let mut worst: f64 = 0.0;
        for (p, &k) in self.module.algebra().labels().iter().enumerate() {
            for i in c.sets_containing(k) {
                let e = self.slice(i, k).unwrap();
                worst = worst.max(norm(&(&e.adjoint_mul(&e) - &CMatrix::identity(self.module.mult()[p]))));
            }
        }
        worst
    }

    /// How far `(⟨z_i|z'_i⟩)ᵢ` is from the image of `A` in `B`, for embedded
    /// vectors `z = ι(g)`, `z' = ι(g')`.
    pub fn inner_product_descent_residual(&self, g: &ModuleVector, h: &ModuleVector) -> Result<f64> {
        let b = self.embed(g)?.inner_product(&self.embed(h)?)?;
        Ok(eta_image_residual(self.datum.cover(), &b))
    }

    /// Column basis (in `⊕ᵢ Z_i` coordinates) of the embedded subspace,
    /// orthonormal for the coordinate inner product.
    pub fn image_basis(&self) -> Result<CMatrix> {
        let z = self.datum.modules();
        let cols: Vec<CMatrix> = self
            .module
            .basis()
            .iter()
            .map(|g| Ok(CMatrix::column_vector(self.embed(g)?.coords())))
            .collect::<Result<_>>()?;
        if cols.is_empty() {
            return Ok(CMatrix::zeros(z.dim(), 0));
        }
        // Embedded basis vectors are orthogonal with squared norm c_k; the
        // range basis just normalizes them.
        range_basis(&CMatrix::hstack(&cols), 1e-12)
    }
}

/// Constraint matrix at one block: rows `z_i − U^{ij} z_j` for the ordered
/// pairs of distinct sets containing `k`, on stacked multiplicity space
/// tensored with `ℂ^{n}` in row-major coordinates.
fn block_constraint(d: &GluingDatum, k: usize, n: usize) -> (CMatrix, CMatrix) {
    let sets = d.cover().sets_containing(k);
    let mults: Vec<usize> = sets.iter().map(|&i| d.modules().mult(i, k).unwrap()).collect();
    let offs: Vec<usize> = mults
        .iter()
        .scan(0, |acc, &m| {
            let o = *acc;
            *acc += m;
            Some(o)
        })
        .collect();
    let total: usize = mults.iter().sum();
    let mut rows = Vec::new();
    for (a, &i) in sets.iter().enumerate() {
        for (b, &j) in sets.iter().enumerate() {
            if a == b {
                continue;
            }
            let mut r = CMatrix::zeros(mults[a], total);
            r.set_submatrix(0, offs[a], &CMatrix::identity(mults[a]));
            r.set_submatrix(0, offs[b], &(-d.zeta(i, j, k).unwrap()));
            rows.push(r);
        }
    }
    let c0 = if rows.is_empty() {
        CMatrix::zeros(0, total)
    } else {
        CMatrix::vstack(&rows)
    };
    let full = c0.kron(&CMatrix::identity(n));
    (c0, full)
}

/// `G(Z,ζ) = {(z_i) : z_i|_{F_ij} = ζ_ij(z_j|_{F_ij})}`.
///
/// `tol` is the relative rank threshold of the kernel computations; the
/// transitions must be unitary and involutive within `tol`.
pub fn glue(d: &GluingDatum, tol: f64) -> Result<GluedModule> {
    let rep = validate_gluing_datum(d, tol)?;
    if !rep.is_valid() {
        return Err(Error::invalid(format!(
            "gluing datum is not unitary and involutive (residuals {:.3e}, {:.3e})",
            rep.unitary_residual, rep.involutive_residual
        )));
    }
    let alg = d.base();
    let mut mult = Vec::with_capacity(alg.num_blocks());
    let mut embedding = Vec::with_capacity(alg.num_blocks());
    for (&k, &n) in alg.labels().iter().zip(alg.dims()) {
        let (c0, full) = block_constraint(d, k, n);
        let ker = kernel_basis(&full, tol)?;
        if ker.cols() % n != 0 {
            let sv = svd(&full)?.singular_values;
            let smax = sv.first().copied().unwrap_or(0.0);
            let kept: Vec<f64> = sv.iter().copied().filter(|&s| s > tol * smax).collect();
            let dropped = sv.iter().copied().find(|&s| s <= tol * smax).unwrap_or(0.0);
            return Err(Error::RankAmbiguity {
                block: k,
                kernel_dim: ker.cols(),
                block_dim: n,
                sigma_min: kept.last().copied().unwrap_or(0.0),
                sigma_dropped: dropped,
            });
        }
        let dk = ker.cols() / n;
        let w = kernel_basis(&c0, tol)?;
        if w.cols() != dk {
            return Err(Error::ModelViolation {
                what: format!("block {k}: multiplicity kernel has dimension {} but the full kernel gives {dk}", w.cols()),
                residual: (w.cols() as f64 - dk as f64).abs(),
            });
        }
        let c = d.cover().sets_containing(k).len() as f64;
        mult.push(dk);
        embedding.push(w.scale_real(c.sqrt()));
    }
    Ok(GluedModule {
        datum: d.clone(),
        module: HilbertModule::new(alg.clone(), mult)?,
        embedding,
    })
}

/// `G(α)`: the diagonal map `⊕α_i` restricted to the glued modules,
/// `G(α)_k = (1/c_k) E^W_k* diag(α_i) E^Z_k`.
pub fn glue_morphism(alpha: &GlueMorphism, src: &GluedModule, tgt: &GluedModule, tol: f64) -> Result<AdjointableMap> {
    let residual = alpha.intertwining_residual(src.datum(), tgt.datum())?;
    if residual > tol {
        return Err(Error::NotAMorphism { residual, tol });
    }
    let alg = src.module().algebra();
    let blocks = alg
        .labels()
        .iter()
        .enumerate()
        .map(|(p, &k)| {
            let sets = src.datum().cover().sets_containing(k);
            let diag = CMatrix::block_diag(&sets.iter().map(|&i| alpha.maps[i].block(k).unwrap().clone()).collect::<Vec<_>>());
            tgt.embedding(p)
                .adjoint_mul(&diag.matmul(src.embedding(p)))
                .scale_real(1.0 / sets.len() as f64)
        })
        .collect();
    AdjointableMap::new(src.module().clone(), tgt.module().clone(), blocks)
}

/// `Φ^X: X → G(P X)` together with the glued module.
#[derive(Clone, Debug, PartialEq)]
pub struct PhiIso {
    pub glued: GluedModule,
    pub map: AdjointableMap,
}

/// `Φ^X(x) = (x|_{F_i})ᵢ`, expressed in the glued module:
/// `Φ_k = (1/c_k) E_k* [I; …; I]`.
pub fn phi_iso(x: &HilbertModule, cover: &ClosedCover, tol: f64) -> Result<PhiIso> {
    let glued = glue(&pull_apart(x, cover)?, tol)?;
    let blocks = x
        .algebra()
        .labels()
        .iter()
        .enumerate()
        .map(|(p, &k)| {
            let c = cover.sets_containing(k).len();
            let stack = CMatrix::vstack(&vec![CMatrix::identity(x.mult()[p]); c]);
            glued.embedding(p).adjoint_mul(&stack).scale_real(1.0 / c as f64)
        })
        .collect();
    let map = AdjointableMap::new(x.clone(), glued.module().clone(), blocks)?;
    Ok(PhiIso { glued, map })
}

/// `ε: P G(Z,ζ) → (Z,ζ)` with its checks.
#[derive(Clone, Debug, PartialEq)]
pub struct EpsilonIso {
    pub glued: GluedModule,
    /// `P G(Z,ζ)`, whose transitions are the canonical `κ`.
    pub source: GluingDatum,
    pub morphism: GlueMorphism,
    pub unitary_residual: f64,
    pub intertwining_residual: f64,
}

/// Per set `i`, `dim Z_i − dim G|_{F_i}`.
pub fn epsilon_deficits(glued: &GluedModule) -> Vec<usize> {
    let z = glued.datum().modules();
    (0..z.cover().len())
        .map(|i| {
            let gi = glued.module().restrict(z.cover().set(i)).unwrap();
            z.part(i).dim().saturating_sub(gi.dim())
        })
        .collect()
}

pub fn epsilon_iso(d: &GluingDatum, tol: f64) -> Result<EpsilonIso> {
    let glued = glue(d, tol)?;
    let deficit: usize = epsilon_deficits(&glued).iter().sum();
    if deficit > 0 {
        return Err(Error::CocycleViolated { deficit });
    }
    let source = pull_apart(glued.module(), d.cover())?;
    let morphism = GlueMorphism {
        maps: (0..d.cover().len())
            .map(|i| glued.epsilon_component(i))
            .collect::<Result<_>>()?,
    };
    let unitary_residual = morphism
        .maps
        .iter()
        .flat_map(|m| m.blocks().iter().map(|b| unitarity_residual(b).unwrap_or(f64::INFINITY)))
        .fold(0.0, f64::max);
    let intertwining_residual = morphism.intertwining_residual(&source, d)?;
    Ok(EpsilonIso {
        glued,
        source,
        morphism,
        unitary_residual,
        intertwining_residual,
    })
}

/// Residuals of the descent identities for one datum.
#[derive(Clone, Debug, PartialEq)]
pub struct DescentReport {
    /// `max ‖ε(δ z) − z‖` over the sampled `z`.
    pub epsilon_delta: f64,
    /// `max ‖(δ⊗id)(δ z) − (η⊗id)(δ z)‖`.
    pub coassociativity: f64,
    /// `max |‖δ z‖ − ‖z‖|`.
    pub delta_isometry: f64,
    pub glue_dim: usize,
    pub kernel_dim: usize,
    /// Largest principal angle sine between `ι(G)` and `ker(η − δ)`.
    pub kernel_distance: f64,
    /// `dim (G ⊗ B)` in the pair model.
    pub glued_tensor_dim: usize,
    /// `dim ker((η − δ) ⊗ id)`.
    pub tensor_kernel_dim: usize,
    pub tensor_kernel_distance: f64,
    /// `max |‖(ι⊗id) s‖ − ‖s‖|` over sampled `s ∈ G ⊗ B`.
    pub exactness_isometry: f64,
}

impl DescentReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.epsilon_delta <= tol
            && self.coassociativity <= tol
            && self.delta_isometry <= tol
            && self.glue_dim == self.kernel_dim
            && self.kernel_distance <= tol
            && self.glued_tensor_dim == self.tensor_kernel_dim
            && self.tensor_kernel_distance <= tol
            && self.exactness_isometry <= tol
    }
}

/// Checks `ε∘δ = id`, `(δ⊗id)∘δ = (η⊗id)∘δ`, `G(Z,ζ) = ker(η − δ)` and
/// `G(Z,ζ) ⊗ B = ker((η − δ) ⊗ id)` on one datum. The first two use
/// `samples` random vectors drawn from `seed`; the kernel identities are
/// exact subspace comparisons.
pub fn descent_identities_check(d: &GluingDatum, tol: f64, seed: u64, samples: usize) -> Result<DescentReport> {
    let z = d.modules();
    let pair = TensorModel::pair(z)?;
    let triple = TensorModel::triple(z)?;
    let mut rng = SplitMix64::new(seed);

    let mut epsilon_delta: f64 = 0.0;
    let mut coassociativity: f64 = 0.0;
    let mut delta_isometry: f64 = 0.0;
    for _ in 0..samples {
        let v = random_bvector(&mut rng, z);
        let dv = tensor::delta_map(d, &pair, &v)?;
        epsilon_delta = epsilon_delta.max(tensor::epsilon_map(&pair, &dv)?.sub(&v)?.norm());
        let a = tensor::lift_to_triple(LiftKind::DeltaTensorId, d, &pair, &triple, &dv)?;
        let b = tensor::lift_to_triple(LiftKind::EtaTensorId, d, &pair, &triple, &dv)?;
        coassociativity = coassociativity.max(a.sub(&b)?.norm());
        delta_isometry = delta_isometry.max((dv.norm() - v.norm()).abs() / v.norm().max(1.0));
    }

    let glued = glue(d, tol)?;
    let zl = z.coord_labels();
    let eta_minus_delta = &tensor::eta_z_matrix(&pair)? - &tensor::delta_matrix(d, &pair)?;
    let ker = tensor::model_kernel(&eta_minus_delta, &zl, &pair.coord_labels(), tol)?;
    let img = glued.image_basis()?;
    let kernel_distance = labelled_subspace_distance(&img, &ker, &zl);

    // G ⊗ B ≅ ⊕_j G|_{F_j}, mapped into the pair model by ι ⊗ id.
    let gb = BModule::pulled_apart(glued.module(), d.cover())?;
    let iota = |s: &BVector| -> Result<crate::tensor::ModelVector> {
        let mut t = pair.zero();
        for (idx, tup) in pair.tuples().iter().enumerate() {
            let (i, j) = (tup[0], tup[1]);
            let comp = &pair.components()[idx];
            let blocks = comp
                .algebra()
                .labels()
                .iter()
                .map(|&k| glued.slice(i, k).unwrap().matmul(s.parts[j].block(k).unwrap()))
                .collect();
            t.comps[idx] = ModuleVector::new(comp.clone(), blocks)?;
        }
        Ok(t)
    };
    let jm = crate::numlin::matrix_of_linear(gb.dim(), pair.dim(), |c| Ok(iota(&gb.from_coords(c)?)?.coords()))?;
    let pl = pair.coord_labels();
    let glued_tensor = if jm.cols() == 0 {
        CMatrix::zeros(pair.dim(), 0)
    } else {
        range_basis(&jm, 1e-12)?
    };
    let lifted = &tensor::lift_matrix(LiftKind::EtaTensorId, d, &pair, &triple)?
        - &tensor::lift_matrix(LiftKind::DeltaTensorId, d, &pair, &triple)?;
    let tker = tensor::model_kernel(&lifted, &pl, &triple.coord_labels(), tol)?;
    let tensor_kernel_distance = labelled_subspace_distance(&glued_tensor, &tker, &pl);

    let mut exactness_isometry: f64 = 0.0;
    for _ in 0..samples.min(20) {
        let s = BVector {
            parts: gb.parts().iter().map(|p| random_vector(&mut rng, p)).collect(),
        };
        let t = iota(&s)?;
        exactness_isometry = exactness_isometry.max((t.norm() - s.norm()).abs() / s.norm().max(1.0));
    }

    Ok(DescentReport {
        epsilon_delta,
        coassociativity,
        delta_isometry,
        glue_dim: glued.module().dim(),
        kernel_dim: ker.cols(),
        kernel_distance,
        glued_tensor_dim: gb.dim(),
        tensor_kernel_dim: tker.cols(),
        tensor_kernel_distance,
        exactness_isometry,
    })
}

/// Residuals of `δ` as a map of right B-modules.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaReport {
    /// `max ‖δ(z·b) − δ(z)·b‖`.
    pub b_linearity: f64,
    /// `max |‖δ z‖ − ‖z‖|`.
    pub isometry: f64,
    /// The same for `2×2` arrays of vectors.
    pub isometry_level2: f64,
}

impl DeltaReport {
    pub fn max_residual(&self) -> f64 {
        self.b_linearity.max(self.isometry).max(self.isometry_level2)
    }
}

/// Samples `δ` on random vectors and arrays. Norms are relative to
/// `max(1, ‖input‖)`.
pub fn delta_check(d: &GluingDatum, seed: u64, samples: usize) -> Result<DeltaReport> {
    let z = d.modules();
    let pair = TensorModel::pair(z)?;
    let b = crate::cstar::SumAlgebraB::new(z.base(), z.cover())?;
    let mut rng = SplitMix64::new(seed);
    let mut rep = DeltaReport {
        b_linearity: 0.0,
        isometry: 0.0,
        isometry_level2: 0.0,
    };
    for _ in 0..samples {
        let v = random_bvector(&mut rng, z);
        let e = crate::gen::random_b_element(&mut rng, &b);
        let lhs = tensor::delta_map(d, &pair, &v.right_act(&e)?)?;
        let rhs = pair.right_act(&tensor::delta_map(d, &pair, &v)?, &e)?;
        let scale = (v.norm() * e.norm()).max(1.0);
        rep.b_linearity = rep.b_linearity.max(lhs.sub(&rhs)?.norm() / scale);
        let dv = tensor::delta_map(d, &pair, &v)?;
        rep.isometry = rep.isometry.max((dv.norm() - v.norm()).abs() / v.norm().max(1.0));

        let arr: Vec<Vec<BVector>> = (0..2).map(|_| (0..2).map(|_| random_bvector(&mut rng, z)).collect()).collect();
        let images: Vec<Vec<tensor::ModelVector>> = arr
            .iter()
            .map(|row| row.iter().map(|v| tensor::delta_map(d, &pair, v)).collect::<Result<_>>())
            .collect::<Result<_>>()?;
        let n_in = tensor::amplified_sum_norm(
            &arr.iter().map(|row| row.iter().map(|v| v.parts.as_slice()).collect()).collect::<Vec<_>>(),
        )?;
        let n_out = tensor::amplified_sum_norm(
            &images.iter().map(|row| row.iter().map(|t| t.comps.as_slice()).collect()).collect::<Vec<_>>(),
        )?;
        rep.isometry_level2 = rep.isometry_level2.max((n_out - n_in).abs() / n_in.max(1.0));
    }
    Ok(rep)
}

/// Image of `η^X` and of `Φ^X` against the compatibility subspace
/// `ker(η⊗id − id⊗η_B) = {(x_i) : x_i|_{F_ij} = x_j|_{F_ij}}`.
#[derive(Clone, Debug, PartialEq)]
pub struct EtaImageReport {
    pub x_dim: usize,
    pub kernel_dim: usize,
    pub eta_image_dim: usize,
    pub eta_distance: f64,
    pub phi_image_dim: usize,
    pub phi_distance: f64,
}

impl EtaImageReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.kernel_dim == self.x_dim
            && self.eta_image_dim == self.x_dim
            && self.phi_image_dim == self.x_dim
            && self.eta_distance <= tol
            && self.phi_distance <= tol
    }
}

pub fn eta_image_check(x: &HilbertModule, cover: &ClosedCover, tol: f64) -> Result<EtaImageReport> {
    let z = BModule::pulled_apart(x, cover)?;
    let pair = TensorModel::pair(&z)?;
    let zl = z.coord_labels();
    let lifted = &crate::numlin::matrix_of_linear(z.dim(), pair.dim(), |c| {
        Ok(tensor::x_eta_tensor_id(&pair, &z.from_coords(c)?)?.coords())
    })? - &crate::numlin::matrix_of_linear(z.dim(), pair.dim(), |c| {
        Ok(tensor::x_id_tensor_eta_b(&pair, &z.from_coords(c)?)?.coords())
    })?;
    let ker = tensor::model_kernel(&lifted, &zl, &pair.coord_labels(), tol)?;
    let image = |m: &CMatrix| -> Result<CMatrix> {
        if m.cols() == 0 {
            Ok(CMatrix::zeros(z.dim(), 0))
        } else {
            range_basis(m, 1e-12)
        }
    };
    let eta = crate::numlin::matrix_of_linear(x.dim(), z.dim(), |c| {
        Ok(tensor::eta_x(&ModuleVector::from_coords(x, c)?, cover)?.coords())
    })?;
    let eta_img = image(&eta)?;
    let phi = phi_iso(x, cover, tol)?;
    let pm = crate::numlin::matrix_of_linear(x.dim(), z.dim(), |c| {
        let v = crate::hmod::apply_map(&phi.map, &ModuleVector::from_coords(x, c)?)?;
        Ok(phi.glued.embed(&v)?.coords())
    })?;
    let phi_img = image(&pm)?;
    Ok(EtaImageReport {
        x_dim: x.dim(),
        kernel_dim: ker.cols(),
        eta_image_dim: eta_img.cols(),
        eta_distance: labelled_subspace_distance(&eta_img, &ker, &zl),
        phi_image_dim: phi_img.cols(),
        phi_distance: labelled_subspace_distance(&phi_img, &ker, &zl),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{random_gluing_datum, random_map, GenConfig, TwistMode};
    use crate::hmod::{adjoint_of, apply_map};
    use crate::numlin::C64;

    fn alg(d: &[usize]) -> FdCStarAlgebra {
        FdCStarAlgebra::new(d.to_vec()).unwrap()
    }

    fn phases_datum(p: [f64; 3]) -> GluingDatum {
        let a = alg(&[1]);
        let cover = ClosedCover::new(1, vec![vec![0], vec![0], vec![0]]).unwrap();
        let x = HilbertModule::new(a, vec![1]).unwrap();
        let mut d = pull_apart(&x, &cover).unwrap();
        for ((i, j), v) in [(0, 1), (1, 2), (0, 2)].into_iter().zip(p) {
            d.set_zeta(i, j, 0, CMatrix::identity(1).scale_real(v)).unwrap();
        }
        d
    }

    #[test]
    fn pull_apart_example() {
        let a = alg(&[2, 1, 3]);
        let x = HilbertModule::new(a, vec![1, 2, 2]).unwrap();
        let cover = ClosedCover::new(3, vec![vec![0, 1], vec![1, 2]]).unwrap();
        let d = pull_apart(&x, &cover).unwrap();
        assert_eq!(d.modules().part(0).mult(), &[1, 2]);
        assert_eq!(d.modules().part(1).mult(), &[2, 2]);
        assert_eq!(d.zeta(0, 1, 1).unwrap(), &CMatrix::identity(2));
        let rep = validate_gluing_datum(&d, 1e-12).unwrap();
        assert!(rep.unitary && rep.involutive && rep.cocycle);
        assert_eq!(rep.max_residual(), 0.0);
    }

    #[test]
    fn twisted_phases_report_and_glue_to_zero() {
        let d = phases_datum([1.0, 1.0, -1.0]);
        let rep = validate_gluing_datum(&d, 1e-12).unwrap();
        assert!(rep.unitary && rep.involutive && !rep.cocycle);
        assert!((rep.cocycle_residual - 2.0).abs() < 1e-15);
        let g = glue(&d, 1e-10).unwrap();
        assert_eq!(g.module().mult(), &[0]);
        assert_eq!(epsilon_deficits(&g), vec![1, 1, 1]);
        assert_eq!(epsilon_iso(&d, 1e-10).unwrap_err(), Error::CocycleViolated { deficit: 3 });
    }

    #[test]
    fn bad_diagonal_is_reported() {
        let mut d = phases_datum([1.0, 1.0, 1.0]);
        d.set_zeta(1, 1, 0, CMatrix::identity(1).scale(C64::new(0.0, 1.0))).unwrap();
        let rep = validate_gluing_datum(&d, 1e-12).unwrap();
        assert!(rep.unitary && !rep.involutive);
        assert!(glue(&d, 1e-10).is_err());
    }

    #[test]
    fn two_sets_glue_to_full_multiplicity() {
        let mut rng = SplitMix64::new(5);
        let a = alg(&[2, 3]);
        let x = HilbertModule::new(a, vec![3, 2]).unwrap();
        let cover = ClosedCover::new(2, vec![vec![0, 1], vec![0, 1]]).unwrap();
        let mut d = pull_apart(&x, &cover).unwrap();
        d.set_zeta(0, 1, 0, crate::gen::haar_unitary(&mut rng, 3)).unwrap();
        d.set_zeta(0, 1, 1, crate::gen::haar_unitary(&mut rng, 2)).unwrap();
        let g = glue(&d, 1e-10).unwrap();
        assert_eq!(g.module().mult(), &[3, 2]);
        assert!(g.constraint_residual() < 1e-12);
        assert!(g.isometry_residual() < 1e-12);
    }

    #[test]
    fn phi_is_unitary_and_natural() {
        let mut rng = SplitMix64::new(11);
        let a = alg(&[2, 1, 3]);
        let x = HilbertModule::new(a.clone(), vec![1, 2, 2]).unwrap();
        let y = HilbertModule::new(a, vec![2, 0, 1]).unwrap();
        let cover = ClosedCover::new(3, vec![vec![0, 1], vec![1, 2], vec![0, 2]]).unwrap();
        let px = phi_iso(&x, &cover, 1e-10).unwrap();
        let py = phi_iso(&y, &cover, 1e-10).unwrap();
        assert_eq!(px.glued.module().mult(), x.mult());
        for b in px.map.blocks() {
            assert!(unitarity_residual(b).unwrap() < 1e-12);
        }
        let alpha = random_map(&mut rng, &x, &y).unwrap();
        let ga = glue_morphism(&pull_apart_map(&alpha, &cover).unwrap(), &px.glued, &py.glued, 1e-9).unwrap();
        let lhs = compose(&py.map, &alpha).unwrap();
        let rhs = compose(&ga, &px.map).unwrap();
        assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        // Φ(x) embeds as (x|_{F_i}).
        let v = random_vector(&mut rng, &x);
        let emb = px.glued.embed(&apply_map(&px.map, &v).unwrap()).unwrap();
        let direct = tensor::eta_x(&v, &cover).unwrap();
        assert!(emb.max_abs_diff(&direct) < 1e-12);
    }

    #[test]
    fn glue_is_a_star_functor() {
        let mut rng = SplitMix64::new(2);
        let a = alg(&[2, 2]);
        let x = HilbertModule::new(a, vec![2, 1]).unwrap();
        let cover = ClosedCover::new(2, vec![vec![0], vec![0, 1]]).unwrap();
        let g = glue(&pull_apart(&x, &cover).unwrap(), 1e-10).unwrap();
        let al = random_map(&mut rng, &x, &x).unwrap();
        let be = random_map(&mut rng, &x, &x).unwrap();
        let pa = pull_apart_map(&al, &cover).unwrap();
        let pb = pull_apart_map(&be, &cover).unwrap();
        assert_eq!(pa.adjoint(), pull_apart_map(&adjoint_of(&al), &cover).unwrap());
        let ga = glue_morphism(&pa, &g, &g, 1e-9).unwrap();
        let gb = glue_morphism(&pb, &g, &g, 1e-9).unwrap();
        let gab = glue_morphism(&pa.compose(&pb).unwrap(), &g, &g, 1e-9).unwrap();
        assert!(gab.max_abs_diff(&compose(&ga, &gb).unwrap()) < 1e-10);
        let gas = glue_morphism(&pa.adjoint(), &g, &g, 1e-9).unwrap();
        assert!(gas.max_abs_diff(&adjoint_of(&ga)) < 1e-10);
        let id = glue_morphism(&GlueMorphism::identity(g.datum()), &g, &g, 1e-9).unwrap();
        assert!(id.max_abs_diff(&AdjointableMap::identity(g.module())) < 1e-12);
    }

    #[test]
    fn non_morphisms_are_rejected() {
        let d = phases_datum([1.0, 1.0, 1.0]);
        let g = glue(&d, 1e-10).unwrap();
        let mut m = GlueMorphism::identity(&d);
        m.maps[0] = m.maps[0].scale(C64::new(2.0, 0.0));
        assert!(matches!(glue_morphism(&m, &g, &g, 1e-9), Err(Error::NotAMorphism { .. })));
    }

    #[test]
    fn epsilon_on_coherent_data() {
        for seed in 0..20 {
            let d = random_gluing_datum(&GenConfig::with_seed(seed)).unwrap();
            let e = epsilon_iso(&d, 1e-10).unwrap();
            assert!(e.unitary_residual < 1e-9 && e.intertwining_residual < 1e-9, "seed {seed}");
            let mut rng = SplitMix64::new(seed);
            let g1 = random_vector(&mut rng, e.glued.module());
            let g2 = random_vector(&mut rng, e.glued.module());
            assert!(e.glued.inner_product_descent_residual(&g1, &g2).unwrap() < 1e-10);
        }
    }

    #[test]
    fn descent_on_coherent_and_twisted() {
        for seed in 0..10 {
            let d = random_gluing_datum(&GenConfig::with_seed(seed)).unwrap();
            let r = descent_identities_check(&d, 1e-10, seed, 5).unwrap();
            assert!(r.passes(1e-9), "seed {seed}: {r:?}");
        }
        let d = phases_datum([1.0, 1.0, -1.0]);
        let r = descent_identities_check(&d, 1e-10, 0, 5).unwrap();
        assert!(r.epsilon_delta < 1e-12);
        assert_eq!((r.glue_dim, r.kernel_dim), (0, 0));
        assert_eq!((r.glued_tensor_dim, r.tensor_kernel_dim), (0, 0));
        assert!(r.coassociativity > 1.0);
        let cfg = GenConfig {
            twist_mode: TwistMode::RandomUnitary,
            ..GenConfig::with_seed(4)
        };
        let d = random_gluing_datum(&cfg).unwrap();
        let r = descent_identities_check(&d, 1e-10, 4, 5).unwrap();
        assert_eq!(r.glue_dim, r.kernel_dim);
        assert!(r.kernel_distance < 1e-9 && r.tensor_kernel_distance < 1e-9);
    }

    #[test]
    fn explicit_entries_fill_adjoints() {
        let a = alg(&[1]);
        let cover = ClosedCover::new(1, vec![vec![0], vec![0]]).unwrap();
        let z = BModule::pulled_apart(&HilbertModule::new(a, vec![1]).unwrap(), &cover).unwrap();
        let u = CMatrix::identity(1).scale(C64::new(0.0, 1.0));
        let d = GluingDatum::new(z.clone(), vec![((0, 1, 0), u.clone())]).unwrap();
        assert_eq!(d.zeta(1, 0, 0).unwrap(), &u.adjoint());
        assert!(GluingDatum::new(z, vec![((0, 1, 0), CMatrix::identity(2))]).is_err());
    }

    #[test]
    fn delta_is_b_linear_isometry() {
        for seed in 0..5 {
            let d = random_gluing_datum(&GenConfig::with_seed(seed)).unwrap();
            let r = delta_check(&d, seed, 4).unwrap();
            assert!(r.max_residual() < 1e-12, "{r:?}");
        }
    }

    #[test]
    fn eta_and_phi_images_are_the_compatible_tuples() {
        let x = HilbertModule::new(alg(&[2, 1, 3]), vec![1, 2, 2]).unwrap();
        let cover = ClosedCover::new(3, vec![vec![0, 1], vec![1, 2], vec![1]]).unwrap();
        let r = eta_image_check(&x, &cover, 1e-10).unwrap();
        assert!(r.passes(1e-10), "{r:?}");
    }
}
