//! Equivalence bimodules, their gluing, the obstruction 2-cocycle and
//! Picard conjugation.
//!
//! An `(A′, A)`-equivalence bimodule over `⊕ₖ` blocks is kept in normal form:
//! block `k` is `ℂ^{m_k × n_k}` with `m_k = n′_k`, right action and right
//! inner product as for Hilbert modules, and left action
//! `a′·x = u_k a′_k u_k* x` for a unitary twist `u_k`. Then
//! `ₐ′⟨x|y⟩ = u* x y* u`. Block labels of `A′` and `A` are shared, so the
//! induced map on primitive spectra is the identity.
//!
//! Bimodule maps between normal forms are left multiplications by
//! `λ·u′u*` with `λ` a scalar, which is what makes the obstruction scalar.

use std::collections::BTreeMap;

use crate::cstar::{AlgebraElement, ClosedCover, FdCStarAlgebra};
use crate::error::{Error, Result};
use crate::gen::{random_vector, SplitMix64};
use crate::glue::{
    epsilon_deficits, glue, pull_apart, validate_gluing_datum, DatumReport, GluedModule, GluingDatum,
};
use crate::hmod::{self, BModule, HilbertModule, ModuleVector};
use crate::numlin::{norm, rank, svd, unitarity_residual, CMatrix, C64, DEFAULT_RANK_TOL, ONE, ZERO};

#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceBimodule {
    left: FdCStarAlgebra,
    right: FdCStarAlgebra,
    twist: Vec<CMatrix>,
}

impl EquivalenceBimodule {
    /// The multiplicity of block `k` is the size of `twist[k]`.
    pub fn new(left: FdCStarAlgebra, right: FdCStarAlgebra, twist: Vec<CMatrix>) -> Result<Self> {
        if left.labels() != right.labels() {
            return Err(Error::invalid("left and right algebras have different spectra"));
        }
        if twist.len() != right.num_blocks() {
            return Err(Error::invalid(format!(
                "{} twists for {} blocks",
                twist.len(),
                right.num_blocks()
            )));
        }
        for (p, u) in twist.iter().enumerate() {
            if !u.is_square() {
                return Err(Error::invalid(format!("twist of block {p} is not square")));
            }
            u.check_finite()?;
        }
        Ok(EquivalenceBimodule { left, right, twist })
    }

    /// `ℂ^{n′_k × n_k}` with untwisted actions.
    pub fn standard(left: &FdCStarAlgebra, right: &FdCStarAlgebra) -> Result<Self> {
        let twist = left.dims().iter().map(|&n| CMatrix::identity(n)).collect();
        Self::new(left.clone(), right.clone(), twist)
    }

    /// `A` as an `(A, A)`-bimodule.
    pub fn identity(a: &FdCStarAlgebra) -> Self {
        Self::standard(a, a).expect("same algebra")
    }

    pub fn left(&self) -> &FdCStarAlgebra {
        &self.left
    }

    pub fn right(&self) -> &FdCStarAlgebra {
        &self.right
    }

    pub fn twist(&self) -> &[CMatrix] {
        &self.twist
    }

    pub fn twist_of(&self, k: usize) -> Option<&CMatrix> {
        self.right.position(k).map(|p| &self.twist[p])
    }

    pub fn mult(&self) -> Vec<usize> {
        self.twist.iter().map(CMatrix::rows).collect()
    }

    /// The underlying right Hilbert A-module.
    pub fn right_module(&self) -> HilbertModule {
        HilbertModule::new(self.right.clone(), self.mult()).expect("one multiplicity per block")
    }

    fn shapes_ok(&self) -> bool {
        self.mult() == self.left.dims()
    }

    fn check_vector(&self, x: &ModuleVector) -> Result<()> {
        if x.module() == &self.right_module() {
            Ok(())
        } else {
            Err(Error::invalid("vector is not in the bimodule"))
        }
    }

    /// `a′·x = u a′ u* x` blockwise.
    pub fn left_act(&self, a: &AlgebraElement, x: &ModuleVector) -> Result<ModuleVector> {
        self.check_vector(x)?;
        if a.algebra() != &self.left || !self.shapes_ok() {
            return Err(Error::invalid("left action needs an element of A′ and m_k = n′_k"));
        }
        let blocks = self
            .twist
            .iter()
            .zip(a.blocks())
            .zip(x.blocks())
            .map(|((u, ab), xb)| u.matmul(ab).matmul(&u.adjoint()).matmul(xb))
            .collect();
        ModuleVector::new(x.module().clone(), blocks)
    }

    pub fn right_act(&self, x: &ModuleVector, a: &AlgebraElement) -> Result<ModuleVector> {
        self.check_vector(x)?;
        hmod::right_act(x, a)
    }

    /// `⟨x|y⟩_A = x* y`.
    pub fn right_inner(&self, x: &ModuleVector, y: &ModuleVector) -> Result<AlgebraElement> {
        self.check_vector(x)?;
        hmod::inner_product(x, y)
    }

    /// `ₐ′⟨x|y⟩ = u* x y* u`.
    pub fn left_inner(&self, x: &ModuleVector, y: &ModuleVector) -> Result<AlgebraElement> {
        self.check_vector(x)?;
        self.check_vector(y)?;
        if !self.shapes_ok() {
            return Err(Error::invalid("left inner product needs m_k = n′_k"));
        }
        let blocks = self
            .twist
            .iter()
            .zip(x.blocks().iter().zip(y.blocks()))
            .map(|(u, (xb, yb))| u.adjoint().matmul(&xb.matmul(&yb.adjoint())).matmul(u))
            .collect();
        AlgebraElement::new(self.left.clone(), blocks)
    }

    /// Restriction to the blocks in `set`.
    pub fn restrict(&self, set: &[usize]) -> Result<Self> {
        let left = self.left.restrict(set)?;
        let right = self.right.restrict(set)?;
        let twist = right.labels().iter().map(|&k| self.twist_of(k).unwrap().clone()).collect();
        Self::new(left, right, twist)
    }
}

/// Outcome of [`validate_bimodule`].
#[derive(Clone, Debug, PartialEq)]
pub struct BimoduleReport {
    /// `m_k = n′_k` for every block.
    pub shapes: bool,
    /// Labels of both algebras agree, so `h_M = id`.
    pub aligned: bool,
    pub twist_residual: f64,
    /// `‖ₐ′⟨x|y⟩·z − x·⟨y|z⟩_A‖` on sampled vectors.
    pub compatibility_residual: f64,
    /// Left action is a *-homomorphism commuting with the right action.
    pub action_residual: f64,
    /// `⟨a′x|y⟩_A = ⟨x|a′*y⟩_A` and `ₐ′⟨xa|y⟩ = ₐ′⟨x|ya*⟩`.
    pub adjointness_residual: f64,
    pub right_full: bool,
    pub left_full: bool,
}

impl BimoduleReport {
    pub fn max_residual(&self) -> f64 {
        self.twist_residual
            .max(self.compatibility_residual)
            .max(self.action_residual)
            .max(self.adjointness_residual)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.shapes && self.aligned && self.right_full && self.left_full && self.max_residual() <= tol
    }
}

const VALIDATION_SEED: u64 = 0x6d6f_7269_7461;

/// Checks the imprimitivity axioms on sampled vectors and fullness of both
/// inner products by rank.
pub fn validate_bimodule(m: &EquivalenceBimodule) -> Result<BimoduleReport> {
    let aligned = m.left.labels() == m.right.labels();
    let shapes = m.shapes_ok();
    let twist_residual = m
        .twist
        .iter()
        .map(|u| unitarity_residual(u).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    let x_mod = m.right_module();
    let right_full = x_mod.mult().iter().all(|&k| k > 0) && full_span(&x_mod, false, m)?;
    if !shapes {
        return Ok(BimoduleReport {
            shapes,
            aligned,
            twist_residual,
            compatibility_residual: f64::INFINITY,
            action_residual: f64::INFINITY,
            adjointness_residual: f64::INFINITY,
            right_full,
            left_full: false,
        });
    }
    let left_full = full_span(&x_mod, true, m)?;
    let mut rng = SplitMix64::new(VALIDATION_SEED);
    let mut compat: f64 = 0.0;
    let mut action: f64 = 0.0;
    let mut adj: f64 = 0.0;
    for _ in 0..4 {
        let x = random_vector(&mut rng, &x_mod);
        let y = random_vector(&mut rng, &x_mod);
        let z = random_vector(&mut rng, &x_mod);
        let a1 = crate::gen::random_element(&mut rng, &m.left);
        let a2 = crate::gen::random_element(&mut rng, &m.left);
        let b = crate::gen::random_element(&mut rng, &m.right);
        let scale = 1.0 + x.norm() * y.norm() * z.norm();

        let lhs = m.left_act(&m.left_inner(&x, &y)?, &z)?;
        let rhs = m.right_act(&x, &m.right_inner(&y, &z)?)?;
        compat = compat.max(lhs.sub(&rhs)?.norm() / scale);

        let l12 = m.left_act(&a1.mul(&a2)?, &x)?;
        let l1l2 = m.left_act(&a1, &m.left_act(&a2, &x)?)?;
        let comm = m.left_act(&a1, &m.right_act(&x, &b)?)?.sub(&m.right_act(&m.left_act(&a1, &x)?, &b)?)?;
        let s2 = 1.0 + a1.norm() * a2.norm() * b.norm() * x.norm();
        action = action.max(l12.sub(&l1l2)?.norm() / s2).max(comm.norm() / s2);

        let r1 = m.right_inner(&m.left_act(&a1, &x)?, &y)?;
        let r2 = m.right_inner(&x, &m.left_act(&a1.adjoint(), &y)?)?;
        let l1 = m.left_inner(&m.right_act(&x, &b)?, &y)?;
        let l2 = m.left_inner(&x, &m.right_act(&y, &b.adjoint())?)?;
        let s3 = 1.0 + (a1.norm() + b.norm()) * x.norm() * y.norm();
        adj = adj.max(r1.sub(&r2)?.norm() / s3).max(l1.sub(&l2)?.norm() / s3);
    }
    Ok(BimoduleReport {
        shapes,
        aligned,
        twist_residual,
        compatibility_residual: compat,
        action_residual: action,
        adjointness_residual: adj,
        right_full,
        left_full,
    })
}

/// Whether the inner products of basis vectors span the whole algebra,
/// checked block by block (products of vectors from different blocks
/// vanish).
fn full_span(x: &HilbertModule, left: bool, m: &EquivalenceBimodule) -> Result<bool> {
    for (p, &k) in x.algebra().labels().iter().enumerate() {
        let (rows, cols) = x.block_shape(p);
        let target = if left { m.left.dims()[p] } else { cols };
        let basis: Vec<CMatrix> = (0..rows * cols)
            .map(|i| CMatrix::unit(rows, cols, i / cols.max(1), i % cols.max(1)))
            .collect();
        let mut vecs = Vec::new();
        for a in &basis {
            for b in &basis {
                let v = if left {
                    let u = m.twist_of(k).unwrap();
                    u.adjoint().matmul(&a.matmul(&b.adjoint())).matmul(u)
                } else {
                    a.adjoint_mul(b)
                };
                if v.max_abs() > 0.0 {
                    vecs.push(v.vectorize());
                }
            }
        }
        if vecs.is_empty() {
            return Ok(false);
        }
        if rank(&CMatrix::hstack(&vecs), DEFAULT_RANK_TOL)? != target * target {
            return Ok(false);
        }
    }
    Ok(true)
}

/// The dual `M̃` over `(A, A′)`, in normal form. The element `x̃` has
/// coordinates `x* u`, and the dual twist is the identity.
pub fn dual_bimodule(m: &EquivalenceBimodule) -> EquivalenceBimodule {
    let twist = m.right.dims().iter().map(|&n| CMatrix::identity(n)).collect();
    EquivalenceBimodule::new(m.right.clone(), m.left.clone(), twist).expect("same spectra")
}

/// `x ↦ x̃` in the coordinates of [`dual_bimodule`] (conjugate linear).
pub fn dual_vector(m: &EquivalenceBimodule, x: &ModuleVector) -> Result<ModuleVector> {
    m.check_vector(x)?;
    let d = dual_bimodule(m);
    let blocks = x
        .blocks()
        .iter()
        .zip(&m.twist)
        .map(|(xb, u)| xb.adjoint().matmul(u))
        .collect();
    ModuleVector::new(d.right_module(), blocks)
}

/// The canonical identification `M → M̃̃`, `x ↦ u* x` blockwise.
pub fn double_dual_map(m: &EquivalenceBimodule) -> Vec<CMatrix> {
    m.twist.iter().map(CMatrix::adjoint).collect()
}

/// `M ⊗_{A′} N` for `M` over `(A″, A′)` and `N` over `(A′, A)`. In normal
/// form `x ⊗ y ↦ x v* y` where `v` is the twist of `N`; the twist of the
/// product is that of `M`.
pub fn tensor_bimodules(m: &EquivalenceBimodule, n: &EquivalenceBimodule) -> Result<EquivalenceBimodule> {
    if m.right != n.left {
        return Err(Error::invalid("middle algebras differ"));
    }
    if !m.shapes_ok() || !n.shapes_ok() {
        return Err(Error::invalid("tensor product needs normal-form bimodules"));
    }
    EquivalenceBimodule::new(m.left.clone(), n.right.clone(), m.twist.clone())
}

/// `x ⊗ y ↦ x v* y`.
pub fn tensor_vectors(
    m: &EquivalenceBimodule,
    n: &EquivalenceBimodule,
    x: &ModuleVector,
    y: &ModuleVector,
) -> Result<ModuleVector> {
    let t = tensor_bimodules(m, n)?;
    m.check_vector(x)?;
    n.check_vector(y)?;
    let blocks = x
        .blocks()
        .iter()
        .zip(&n.twist)
        .zip(y.blocks())
        .map(|((xb, v), yb)| xb.matmul(&v.adjoint()).matmul(yb))
        .collect();
    ModuleVector::new(t.right_module(), blocks)
}

/// Oracle setup for [`tensor_bimodules`]: `M` as a right A′-module, `N`
/// with its left A′-action, and the evaluator `x ⊗ y ↦ x v* y`.
pub fn tensor_oracle(m: &EquivalenceBimodule, n: &EquivalenceBimodule) -> Result<crate::tensor::ModelOracle> {
    let t = tensor_bimodules(m, n)?;
    let left = m.right_module();
    let nmod = n.right_module();
    let right = crate::tensor::LeftAction::from_fn(&n.left, nmod.dim(), |e| {
        crate::numlin::matrix_of_linear(nmod.dim(), nmod.dim(), |c| {
            Ok(n.left_act(e, &ModuleVector::from_coords(&nmod, c)?)?.coords())
        })
    })?;
    let tmod = t.right_module();
    let evaluator = crate::numlin::matrix_of_linear(left.dim() * nmod.dim(), tmod.dim(), |c| {
        // Plain basis vectors are e_a ⊗ e_w; general inputs are sums of them.
        let mut out = vec![ZERO; tmod.dim()];
        for (idx, &z) in c.iter().enumerate() {
            if z == ZERO {
                continue;
            }
            let (a, w) = (idx / nmod.dim(), idx % nmod.dim());
            let mut xa = vec![ZERO; left.dim()];
            xa[a] = ONE;
            let mut yw = vec![ZERO; nmod.dim()];
            yw[w] = ONE;
            let v = tensor_vectors(
                m,
                n,
                &ModuleVector::from_coords(&left, &xa)?,
                &ModuleVector::from_coords(&nmod, &yw)?,
            )?;
            for (o, q) in out.iter_mut().zip(v.coords()) {
                *o += z * q;
            }
        }
        Ok(out)
    })?;
    Ok(crate::tensor::ModelOracle { left, right, evaluator })
}

/// A unitary bimodule isomorphism `M → N`, one left multiplication per block.
#[derive(Clone, Debug, PartialEq)]
pub struct BimoduleIso {
    pub blocks: Vec<CMatrix>,
    /// Unitarity and left-action intertwining residual.
    pub residual: f64,
}

/// Solves `W (u_M a′ u_M*) = (u_N a′ u_N*) W` for all `a′`, blockwise. The
/// solution is `c·u_N u_M*`; the phase is fixed so that `c = 1`.
pub fn bimodules_isomorphic(m: &EquivalenceBimodule, n: &EquivalenceBimodule, tol: f64) -> Option<BimoduleIso> {
    if m.left != n.left || m.right != n.right || m.mult() != n.mult() || !m.shapes_ok() {
        return None;
    }
    let mut blocks = Vec::with_capacity(m.twist.len());
    for (um, un) in m.twist.iter().zip(&n.twist) {
        let d = um.rows();
        // Unknown W in row-major coordinates; one row block per unit E_rc.
        let mut rows = Vec::new();
        for r in 0..d {
            for c in 0..d {
                let e = CMatrix::unit(d, d, r, c);
                let lm = um.matmul(&e).matmul(&um.adjoint());
                let ln = un.matmul(&e).matmul(&un.adjoint());
                // vec(W L) = (I ⊗ Lᵀ) vec W, vec(L W) = (L ⊗ I) vec W.
                rows.push(&CMatrix::identity(d).kron(&lm.transpose()) - &ln.kron(&CMatrix::identity(d)));
            }
        }
        let sys = if rows.is_empty() {
            CMatrix::zeros(0, 0)
        } else {
            CMatrix::vstack(&rows)
        };
        // The system has entries of size one, so the threshold is absolute;
        // a relative cut would misread rounding noise as full rank.
        let dec = svd(&sys).ok()?;
        let r = dec.singular_values.iter().filter(|&&s| s > DEFAULT_RANK_TOL).count();
        let ker = dec.v.columns(r..sys.cols());
        if ker.cols() != 1 {
            if d == 0 {
                blocks.push(CMatrix::zeros(0, 0));
                continue;
            }
            return None;
        }
        let w = ker.column(0).reshape(d, d);
        // w = c u_N u_M*; scale so that c = 1.
        let c = un.adjoint().matmul(&w).matmul(um).trace() / d as f64;
        if c.norm() == 0.0 {
            return None;
        }
        blocks.push(w.scale(c.inv()));
    }
    let residual = iso_residual(m, n, &blocks);
    (residual <= tol).then_some(BimoduleIso { blocks, residual })
}

/// Unitarity of each block plus left-action intertwining on matrix units.
fn iso_residual(m: &EquivalenceBimodule, n: &EquivalenceBimodule, blocks: &[CMatrix]) -> f64 {
    let mut worst: f64 = 0.0;
    for ((um, un), w) in m.twist.iter().zip(&n.twist).zip(blocks) {
        worst = worst.max(unitarity_residual(w).unwrap_or(f64::INFINITY));
        let d = um.rows();
        for r in 0..d {
            for c in 0..d {
                let e = CMatrix::unit(d, d, r, c);
                let lhs = w.matmul(&um.matmul(&e).matmul(&um.adjoint()));
                let rhs = un.matmul(&e).matmul(&un.adjoint()).matmul(w);
                worst = worst.max(norm(&(&lhs - &rhs)));
            }
        }
    }
    worst
}

/// Residual of a given family of blocks as a bimodule isomorphism `M → N`.
pub fn bimodule_iso_residual(m: &EquivalenceBimodule, n: &EquivalenceBimodule, blocks: &[CMatrix]) -> f64 {
    if blocks.len() != m.twist.len() || m.mult() != n.mult() {
        return f64::INFINITY;
    }
    iso_residual(m, n, blocks)
}

/// Local equivalence bimodules `N_i` over `(A′|_{F_i}, A|_{F_i})` with
/// transition bimodule maps `ν_ij` on the overlaps.
#[derive(Clone, Debug, PartialEq)]
pub struct BimoduleGluingDatum {
    left: FdCStarAlgebra,
    parts: Vec<EquivalenceBimodule>,
    datum: GluingDatum,
}

impl BimoduleGluingDatum {
    /// Transitions follow the conventions of [`GluingDatum::new`].
    pub fn new(
        left: &FdCStarAlgebra,
        right: &FdCStarAlgebra,
        cover: &ClosedCover,
        parts: Vec<EquivalenceBimodule>,
        nu: Vec<((usize, usize, usize), CMatrix)>,
    ) -> Result<Self> {
        if left.labels() != right.labels() {
            return Err(Error::invalid("left and right algebras have different spectra"));
        }
        if parts.len() != cover.len() {
            return Err(Error::invalid("one bimodule per cover set is required"));
        }
        for (i, p) in parts.iter().enumerate() {
            if p.left != left.restrict(cover.set(i))? || p.right != right.restrict(cover.set(i))? {
                return Err(Error::invalid(format!("bimodule {i} is not over the restricted algebras")));
            }
        }
        let z = BModule::new(right, cover, parts.iter().map(EquivalenceBimodule::right_module).collect())?;
        let datum = GluingDatum::new(z, nu)?;
        Ok(BimoduleGluingDatum {
            left: left.clone(),
            parts,
            datum,
        })
    }

    pub fn left(&self) -> &FdCStarAlgebra {
        &self.left
    }

    pub fn right(&self) -> &FdCStarAlgebra {
        self.datum.base()
    }

    pub fn cover(&self) -> &ClosedCover {
        self.datum.cover()
    }

    pub fn parts(&self) -> &[EquivalenceBimodule] {
        &self.parts
    }

    /// The underlying gluing datum of right Hilbert modules.
    pub fn datum(&self) -> &GluingDatum {
        &self.datum
    }

    pub fn nu(&self, i: usize, j: usize, k: usize) -> Option<&CMatrix> {
        self.datum.zeta(i, j, k)
    }

    pub fn set_nu(&mut self, i: usize, j: usize, k: usize, u: CMatrix) -> Result<()> {
        self.datum.set_zeta(i, j, k, u)
    }

    /// All `ν_ij` at shared blocks, keyed by `(i, j, k)`.
    pub fn nu_entries(&self) -> Vec<((usize, usize, usize), CMatrix)> {
        self.datum.zeta_entries().map(|(&key, u)| (key, u.clone())).collect()
    }

    /// The scalar `λ` with `ν_ij = λ u_i u_j*` at block `k`, and the
    /// distance of `ν_ij` from that form.
    pub fn nu_scalar(&self, i: usize, j: usize, k: usize) -> Option<(C64, f64)> {
        let nu = self.nu(i, j, k)?;
        let ui = self.parts[i].twist_of(k)?;
        let uj = self.parts[j].twist_of(k)?;
        let base = ui.matmul(&uj.adjoint());
        let d = nu.rows().max(1) as f64;
        let lam = base.adjoint_mul(nu).trace() / d;
        Some((lam, norm(&(nu - &base.scale(lam)))))
    }
}

/// Outcome of [`validate_bimodule_datum`].
#[derive(Clone, Debug, PartialEq)]
pub struct BimoduleDatumReport {
    pub parts_valid: bool,
    pub parts_residual: f64,
    pub transitions: DatumReport,
    /// Distance of the `ν_ij` from bimodule maps.
    pub bimodule_map_residual: f64,
}

impl BimoduleDatumReport {
    pub fn is_valid(&self, tol: f64) -> bool {
        self.parts_valid && self.transitions.is_valid() && self.bimodule_map_residual <= tol
    }
}

pub fn validate_bimodule_datum(d: &BimoduleGluingDatum, tol: f64) -> Result<BimoduleDatumReport> {
    let mut parts_valid = true;
    let mut parts_residual: f64 = 0.0;
    for p in &d.parts {
        let r = validate_bimodule(p)?;
        parts_valid &= r.passes(tol);
        parts_residual = parts_residual.max(r.max_residual());
    }
    let transitions = validate_gluing_datum(&d.datum, tol)?;
    let c = d.cover();
    let mut bm: f64 = 0.0;
    for i in 0..c.len() {
        for j in 0..c.len() {
            for k in c.overlap(&[i, j]) {
                bm = bm.max(d.nu_scalar(i, j, k).map_or(f64::INFINITY, |(_, r)| r));
            }
        }
    }
    Ok(BimoduleDatumReport {
        parts_valid,
        parts_residual,
        transitions,
        bimodule_map_residual: bm,
    })
}

/// `(M|_{F_i})ᵢ` with identity transitions.
pub fn pull_apart_bimodule(m: &EquivalenceBimodule, cover: &ClosedCover) -> Result<BimoduleGluingDatum> {
    cover.check_algebra(&m.right)?;
    let parts = cover.sets().iter().map(|s| m.restrict(s)).collect::<Result<Vec<_>>>()?;
    let datum = pull_apart(&m.right_module(), cover)?;
    Ok(BimoduleGluingDatum {
        left: m.left.clone(),
        parts,
        datum,
    })
}

/// A glued equivalence bimodule with the glued right module behind it.
#[derive(Clone, Debug, PartialEq)]
pub struct GluedBimodule {
    pub glued: GluedModule,
    pub bimodule: EquivalenceBimodule,
}

/// Glues the right modules, then installs the left action through the first
/// set containing each block: the twist of the result is `E^{(i)*} u_i`.
/// Without the cocycle the glued multiplicity drops below `n′_k` and no
/// equivalence bimodule exists; the deficit is reported.
pub fn glue_bimodules(d: &BimoduleGluingDatum, tol: f64) -> Result<GluedBimodule> {
    let rep = validate_bimodule_datum(d, tol)?;
    if rep.bimodule_map_residual > tol {
        return Err(Error::ModelViolation {
            what: "transitions are not bimodule maps".into(),
            residual: rep.bimodule_map_residual,
        });
    }
    let glued = glue(&d.datum, tol)?;
    let deficit: usize = epsilon_deficits(&glued).iter().sum();
    if deficit > 0 {
        return Err(Error::CocycleViolated { deficit });
    }
    let right = d.right();
    let twist = right
        .labels()
        .iter()
        .map(|&k| {
            let i = d.cover().sets_containing(k)[0];
            glued.slice(i, k).unwrap().adjoint_mul(d.parts[i].twist_of(k).unwrap())
        })
        .collect();
    let bimodule = EquivalenceBimodule::new(d.left.clone(), right.clone(), twist)?;
    Ok(GluedBimodule { glued, bimodule })
}

/// Residuals of the round trip `P(G(D)) ≅ D`: each `ε_i` must be a unitary
/// bimodule isomorphism `G|_{F_i} → N_i` and intertwine `κ` with `ν`.
pub fn bimodule_epsilon_residual(d: &BimoduleGluingDatum, g: &GluedBimodule) -> Result<f64> {
    let source = pull_apart_bimodule(&g.bimodule, d.cover())?;
    let mut worst: f64 = 0.0;
    let mut maps = Vec::new();
    for i in 0..d.cover().len() {
        let eps = g.glued.epsilon_component(i)?;
        worst = worst.max(bimodule_iso_residual(&source.parts[i], &d.parts[i], eps.blocks()));
        maps.push(eps);
    }
    let m = crate::glue::GlueMorphism { maps };
    Ok(worst.max(m.intertwining_residual(&source.datum, &d.datum)?))
}

/// The scalars `f_{ijl,k}` with `ν_ij ν_jl ν_il* = f·I`, for every ordered
/// triple and shared block.
#[derive(Clone, Debug, PartialEq)]
pub struct Obstruction {
    pub values: BTreeMap<(usize, usize, usize, usize), C64>,
    /// Largest distance of `ν_ij ν_jl ν_il*` from `f·I`.
    pub nonscalar_residual: f64,
}

impl Obstruction {
    pub fn get(&self, i: usize, j: usize, l: usize, k: usize) -> Option<C64> {
        self.values.get(&(i, j, l, k)).copied()
    }

    /// `max |f − 1|`; zero iff the cocycle holds.
    pub fn max_deviation(&self) -> f64 {
        self.values.values().map(|f| (f - ONE).norm()).fold(0.0, f64::max)
    }

    /// `max |f_{jlm} f_{ilm}⁻¹ f_{ijm} f_{ijl}⁻¹ − 1|` over quadruples.
    pub fn coboundary_residual(&self, cover: &ClosedCover) -> f64 {
        let n = cover.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    for m in 0..n {
                        for k in cover.overlap(&[i, j, l, m]) {
                            let (Some(a), Some(b), Some(c), Some(e)) =
                                (self.get(j, l, m, k), self.get(i, l, m, k), self.get(i, j, m, k), self.get(i, j, l, k))
                            else {
                                continue;
                            };
                            worst = worst.max((a * b.inv() * c * e.inv() - ONE).norm());
                        }
                    }
                }
            }
        }
        worst
    }
}

/// Extracts the obstruction scalars as trace-normalized diagonals.
pub fn obstruction_2cocycle(d: &BimoduleGluingDatum, tol: f64) -> Result<Obstruction> {
    let rep = validate_gluing_datum(&d.datum, tol)?;
    if !rep.unitary {
        return Err(Error::invalid(format!(
            "transitions are not unitary (residual {:.3e})",
            rep.unitary_residual
        )));
    }
    let c = d.cover();
    let n = c.len();
    let mut values = BTreeMap::new();
    let mut nonscalar: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            for l in 0..n {
                for k in c.overlap(&[i, j, l]) {
                    let a = d.nu(i, j, k).unwrap().matmul(d.nu(j, l, k).unwrap()).matmul(&d.nu(i, l, k).unwrap().adjoint());
                    let m = a.rows();
                    if m == 0 {
                        continue;
                    }
                    let f = a.trace() / m as f64;
                    nonscalar = nonscalar.max(norm(&(&a - &CMatrix::identity(m).scale(f))));
                    values.insert((i, j, l, k), f);
                }
            }
        }
    }
    if nonscalar > tol {
        return Err(Error::ModelViolation {
            what: "transition triple product is not scalar".into(),
            residual: nonscalar,
        });
    }
    Ok(Obstruction {
        values,
        nonscalar_residual: nonscalar,
    })
}

/// `ν_ij ↦ g_i ν_ij g_j*` with unit scalars `g[i][k]` (indexed by set and
/// block label).
pub fn twist_by_coboundary(d: &BimoduleGluingDatum, g: &[Vec<C64>]) -> Result<BimoduleGluingDatum> {
    let mut out = d.clone();
    let c = d.cover();
    for i in 0..c.len() {
        for j in i + 1..c.len() {
            for k in c.overlap(&[i, j]) {
                let s = g[i][k] * g[j][k].conj();
                out.set_nu(i, j, k, d.nu(i, j, k).unwrap().scale(s))?;
            }
        }
    }
    Ok(out)
}

/// The scalar by which a bimodule map `ν: N_j → N_i` (left multiplication
/// by `ν`) differs from `u_i u_j*`.
fn bimodule_map_scalar(nu: &CMatrix, ui: &CMatrix, uj: &CMatrix, tol: f64) -> Result<C64> {
    let base = ui.matmul(&uj.adjoint());
    let d = nu.rows().max(1) as f64;
    let lam = base.adjoint_mul(nu).trace() / d;
    let r = norm(&(nu - &base.scale(lam)));
    if r > tol {
        return Err(Error::ModelViolation {
            what: "transition is not a bimodule map".into(),
            residual: r,
        });
    }
    Ok(lam)
}

/// `M ⊗ N` of gluing data, with transitions `μ_ij ⊗ ν_ij`. In normal form
/// the tensor of `P: M_j → M_i` and `Q = q v_i v_j*` is left multiplication
/// by `q P`.
pub fn tensor_bimodule_data(m: &BimoduleGluingDatum, n: &BimoduleGluingDatum, tol: f64) -> Result<BimoduleGluingDatum> {
    if m.cover() != n.cover() || m.right() != n.left() {
        return Err(Error::invalid("bimodule data over different covers or middle algebras"));
    }
    let c = m.cover();
    let parts = m
        .parts
        .iter()
        .zip(&n.parts)
        .map(|(a, b)| tensor_bimodules(a, b))
        .collect::<Result<Vec<_>>>()?;
    let mut nu = Vec::new();
    for i in 0..c.len() {
        for j in 0..c.len() {
            if i == j {
                continue;
            }
            for k in c.overlap(&[i, j]) {
                let q = bimodule_map_scalar(
                    n.nu(i, j, k).unwrap(),
                    n.parts[i].twist_of(k).unwrap(),
                    n.parts[j].twist_of(k).unwrap(),
                    tol,
                )?;
                nu.push(((i, j, k), m.nu(i, j, k).unwrap().scale(q)));
            }
        }
    }
    BimoduleGluingDatum::new(m.left(), n.right(), c, parts, nu)
}

/// The dual datum `(Ñ_i, ν̃_ij)` over `(A, A′)`. With dual twists equal to
/// the identity, `ν̃_ij` is the conjugate scalar of `ν_ij` times `I`.
pub fn dual_bimodule_datum(d: &BimoduleGluingDatum, tol: f64) -> Result<BimoduleGluingDatum> {
    let c = d.cover();
    let parts: Vec<EquivalenceBimodule> = d.parts.iter().map(dual_bimodule).collect();
    let mut nu = Vec::new();
    for i in 0..c.len() {
        for j in 0..c.len() {
            if i == j {
                continue;
            }
            for k in c.overlap(&[i, j]) {
                let lam = bimodule_map_scalar(
                    d.nu(i, j, k).unwrap(),
                    d.parts[i].twist_of(k).unwrap(),
                    d.parts[j].twist_of(k).unwrap(),
                    tol,
                )?;
                let n = d.right().dim_of(k).unwrap();
                nu.push(((i, j, k), CMatrix::identity(n).scale(lam.conj())));
            }
        }
    }
    BimoduleGluingDatum::new(d.right(), d.left(), c, parts, nu)
}

/// `𝒩(M) = (Ñ_i ⊗ M_i ⊗ N_i)` with transitions `ν̃_ij ⊗ μ_ij ⊗ ν_ij`, for
/// `D = (N_i, ν_ij)` over `(A′, A)` and `M` over `(A′, A′)`. The
/// obstruction of `D` cancels, so the result satisfies the cocycle when `M`
/// does, whether or not `D` does.
pub fn picard_conjugate(d: &BimoduleGluingDatum, m: &BimoduleGluingDatum, tol: f64) -> Result<BimoduleGluingDatum> {
    if d.cover() != m.cover() {
        return Err(Error::invalid("bimodule data over different covers"));
    }
    if m.left() != d.left() || m.right() != d.left() {
        return Err(Error::invalid("M must be over (A′, A′) for D over (A′, A)"));
    }
    let rep = validate_gluing_datum(&d.datum, tol)?;
    if !rep.is_valid() {
        return Err(Error::invalid("conjugating datum is not unitary"));
    }
    let dual = dual_bimodule_datum(d, tol)?;
    let left = tensor_bimodule_data(&dual, m, tol)?;
    tensor_bimodule_data(&left, d, tol)
}

/// An isomorphism of bimodule gluing data `D₁ → D₂`: per set a unitary
/// bimodule isomorphism, with phases chosen so that the transitions are
/// intertwined.
#[derive(Clone, Debug, PartialEq)]
pub struct DatumIso {
    pub maps: Vec<BimoduleIso>,
    pub residual: f64,
}

pub fn gluing_data_isomorphic(d1: &BimoduleGluingDatum, d2: &BimoduleGluingDatum, tol: f64) -> Option<DatumIso> {
    if d1.cover() != d2.cover() || d1.left() != d2.left() || d1.right() != d2.right() {
        return None;
    }
    let c = d1.cover();
    let mut maps: Vec<BimoduleIso> = d1
        .parts
        .iter()
        .zip(&d2.parts)
        .map(|(a, b)| bimodules_isomorphic(a, b, tol))
        .collect::<Option<_>>()?;
    // Fix per-block phases from the first set containing each block:
    // W_j ↦ c_j W_j with ν₂_ij c_j W_j = c_i W_i ν₁_ij.
    for &k in d1.right().labels() {
        let sets = c.sets_containing(k);
        let root = sets[0];
        for &j in &sets[1..] {
            let pj = d1.parts[j].right().position(k).unwrap();
            let pr = d1.parts[root].right().position(k).unwrap();
            let lhs = d2.nu(root, j, k).unwrap().matmul(&maps[j].blocks[pj]);
            let rhs = maps[root].blocks[pr].matmul(d1.nu(root, j, k).unwrap());
            let dim = lhs.rows().max(1) as f64;
            // lhs = r · rhs with |r| = 1, so c_j = 1/r.
            let r = rhs.adjoint_mul(&lhs).trace() / dim;
            if r.norm() == 0.0 {
                return None;
            }
            maps[j].blocks[pj] = maps[j].blocks[pj].scale(r.inv());
        }
    }
    let mut residual = maps.iter().map(|m| m.residual).fold(0.0, f64::max);
    for i in 0..c.len() {
        for j in 0..c.len() {
            for k in c.overlap(&[i, j]) {
                let pi = d1.parts[i].right().position(k).unwrap();
                let pj = d1.parts[j].right().position(k).unwrap();
                let lhs = d2.nu(i, j, k).unwrap().matmul(&maps[j].blocks[pj]);
                let rhs = maps[i].blocks[pi].matmul(d1.nu(i, j, k).unwrap());
                residual = residual.max(norm(&(&lhs - &rhs)));
            }
        }
    }
    (residual <= tol).then_some(DatumIso { maps, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::haar_unitary;

    fn alg(d: &[usize]) -> FdCStarAlgebra {
        FdCStarAlgebra::new(d.to_vec()).unwrap()
    }

    fn twisted(rng: &mut SplitMix64, left: &FdCStarAlgebra, right: &FdCStarAlgebra) -> EquivalenceBimodule {
        let t = left.dims().iter().map(|&n| haar_unitary(rng, n)).collect();
        EquivalenceBimodule::new(left.clone(), right.clone(), t).unwrap()
    }

    #[test]
    fn standard_bimodule_validates() {
        let m = EquivalenceBimodule::standard(&alg(&[2, 1]), &alg(&[3, 2])).unwrap();
        let r = validate_bimodule(&m).unwrap();
        assert!(r.passes(1e-12), "{r:?}");
    }

    #[test]
    fn wrong_multiplicity_fails() {
        let m = EquivalenceBimodule::new(alg(&[2]), alg(&[3]), vec![CMatrix::identity(1)]).unwrap();
        let r = validate_bimodule(&m).unwrap();
        assert!(!r.shapes && !r.passes(1e-12));
    }

    #[test]
    fn random_twist_validates() {
        let mut rng = SplitMix64::new(1);
        let m = twisted(&mut rng, &alg(&[2, 3]), &alg(&[1, 2]));
        let r = validate_bimodule(&m).unwrap();
        assert!(r.passes(1e-12), "{r:?}");
    }

    #[test]
    fn dual_swaps_inner_products() {
        let mut rng = SplitMix64::new(2);
        let m = twisted(&mut rng, &alg(&[2, 3]), &alg(&[1, 2]));
        let d = dual_bimodule(&m);
        assert!(validate_bimodule(&d).unwrap().passes(1e-12));
        let x = random_vector(&mut rng, &m.right_module());
        let y = random_vector(&mut rng, &m.right_module());
        let lhs = d.right_inner(&dual_vector(&m, &x).unwrap(), &dual_vector(&m, &y).unwrap()).unwrap();
        let rhs = m.left_inner(&x, &y).unwrap();
        assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        // Double dual of the standard bimodule is itself.
        let s = EquivalenceBimodule::standard(&alg(&[2]), &alg(&[3])).unwrap();
        assert_eq!(dual_bimodule(&dual_bimodule(&s)), s);
        // In general the canonical identification is a bimodule isomorphism.
        let dd = dual_bimodule(&dual_bimodule(&m));
        assert!(bimodule_iso_residual(&m, &dd, &double_dual_map(&m)) < 1e-12);
    }

    #[test]
    fn tensor_with_dual_collapses() {
        let mut rng = SplitMix64::new(3);
        let a1 = alg(&[2, 3]);
        let a0 = alg(&[1, 2]);
        let m = twisted(&mut rng, &a1, &a0);
        let t = tensor_bimodules(&m, &dual_bimodule(&m)).unwrap();
        assert!(bimodules_isomorphic(&t, &EquivalenceBimodule::identity(&a1), 1e-10).is_some());
        let id = EquivalenceBimodule::identity(&a1);
        let t2 = tensor_bimodules(&id, &m).unwrap();
        assert!(bimodules_isomorphic(&t2, &m, 1e-10).is_some());
        assert_eq!(t.right_module().dim(), 4 + 9);
        let ag = tensor_oracle(&m, &dual_bimodule(&m)).unwrap().check().unwrap();
        assert!(ag.passes(1e-9), "{ag:?}");
    }

    #[test]
    fn isomorphism_witnesses() {
        let mut rng = SplitMix64::new(4);
        let a = alg(&[2, 2]);
        let b = alg(&[1, 3]);
        let s = EquivalenceBimodule::standard(&a, &b).unwrap();
        let w = bimodules_isomorphic(&s, &s, 1e-12).unwrap();
        assert!(w.blocks.iter().all(|m| (m - &CMatrix::identity(2)).max_abs() < 1e-12));
        let t = twisted(&mut rng, &a, &b);
        let w = bimodules_isomorphic(&s, &t, 1e-12).unwrap();
        for (wb, u) in w.blocks.iter().zip(t.twist()) {
            assert!((wb - u).max_abs() < 1e-12);
        }
        let other = EquivalenceBimodule::standard(&alg(&[2, 1]), &b).unwrap();
        assert!(bimodules_isomorphic(&s, &other, 1e-12).is_none());
    }

    fn phases_datum(p: [C64; 3]) -> BimoduleGluingDatum {
        let a = alg(&[1]);
        let cover = ClosedCover::new(1, vec![vec![0], vec![0], vec![0]]).unwrap();
        let m = EquivalenceBimodule::identity(&a);
        let mut d = pull_apart_bimodule(&m, &cover).unwrap();
        for ((i, j), v) in [(0, 1), (1, 2), (0, 2)].into_iter().zip(p) {
            d.set_nu(i, j, 0, CMatrix::identity(1).scale(v)).unwrap();
        }
        d
    }

    #[test]
    fn obstruction_of_phases() {
        let one = ONE;
        let d = phases_datum([one, one, -one]);
        let f = obstruction_2cocycle(&d, 1e-12).unwrap();
        assert!((f.get(0, 1, 2, 0).unwrap() + one).norm() < 1e-12);
        assert!(glue_bimodules(&d, 1e-10).is_err());
        let coherent = phases_datum([one, one, one]);
        let f = obstruction_2cocycle(&coherent, 1e-12).unwrap();
        assert_eq!(f.max_deviation(), 0.0);
    }

    #[test]
    fn picard_cancels_the_obstruction() {
        let one = ONE;
        let d = phases_datum([one, one, -one]);
        let a = d.left().clone();
        let m = pull_apart_bimodule(&EquivalenceBimodule::identity(&a), d.cover()).unwrap();
        let out = picard_conjugate(&d, &m, 1e-12).unwrap();
        let rep = validate_gluing_datum(out.datum(), 1e-10).unwrap();
        assert!(rep.cocycle, "{rep:?}");
        assert!(gluing_data_isomorphic(&out, &m, 1e-10).is_some());
    }

    #[test]
    fn bimodule_round_trip() {
        let mut rng = SplitMix64::new(8);
        let a1 = alg(&[2, 1, 3]);
        let a0 = alg(&[1, 2, 2]);
        let m = twisted(&mut rng, &a1, &a0);
        let cover = ClosedCover::new(3, vec![vec![0, 1], vec![1, 2], vec![0, 2]]).unwrap();
        let d = pull_apart_bimodule(&m, &cover).unwrap();
        let g = glue_bimodules(&d, 1e-10).unwrap();
        assert!(validate_bimodule(&g.bimodule).unwrap().passes(1e-9));
        assert!(bimodules_isomorphic(&g.bimodule, &m, 1e-9).is_some());
        assert!(bimodule_epsilon_residual(&d, &g).unwrap() < 1e-9);
        // Single set cover: gluing is the identity up to the canonical map.
        let d1 = pull_apart_bimodule(&m, &ClosedCover::trivial(3)).unwrap();
        let g1 = glue_bimodules(&d1, 1e-10).unwrap();
        assert!(bimodules_isomorphic(&g1.bimodule, &m, 1e-10).is_some());
    }

    fn phase_cfg(seed: u64, ph: Vec<C64>) -> crate::gen::GenConfig {
        crate::gen::GenConfig {
            twist_mode: crate::gen::TwistMode::PrescribedPhases(ph),
            ..crate::gen::GenConfig::with_seed(seed)
        }
    }

    #[test]
    fn generated_phases_give_minus_one() {
        let d = crate::gen::random_bimodule_datum(&phase_cfg(5, vec![ONE, ONE, -ONE])).unwrap();
        let f = obstruction_2cocycle(&d, 1e-10).unwrap();
        assert!(f.values.values().any(|z| (z + ONE).norm() < 1e-12));
        assert!((f.max_deviation() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cech_identity_and_coboundary_invariance() {
        let mut checked = 0;
        for seed in 0..40 {
            let cfg = crate::gen::GenConfig {
                twist_mode: crate::gen::TwistMode::RandomUnitary,
                ..crate::gen::GenConfig::with_seed(seed)
            };
            let d = crate::gen::random_bimodule_datum(&cfg).unwrap();
            if d.cover().len() < 4 {
                continue;
            }
            checked += 1;
            let f = obstruction_2cocycle(&d, 1e-10).unwrap();
            assert!(f.coboundary_residual(d.cover()) < 1e-10);
            let mut rng = SplitMix64::new(seed);
            let g: Vec<Vec<C64>> = (0..4).map(|_| crate::gen::random_phases(&mut rng, d.right().num_blocks())).collect();
            let f2 = obstruction_2cocycle(&twist_by_coboundary(&d, &g).unwrap(), 1e-10).unwrap();
            for (key, v) in &f.values {
                assert!((v - f2.values[key]).norm() < 1e-10);
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn picard_on_random_data() {
        let mut hits = 0;
        for seed in 0..30 {
            let cfg = crate::gen::GenConfig {
                twist_mode: crate::gen::TwistMode::RandomUnitary,
                max_blocks: 3,
                max_block_dim: 3,
                max_cover_sets: 3,
                ..crate::gen::GenConfig::with_seed(seed)
            };
            let d = crate::gen::random_bimodule_datum(&cfg).unwrap();
            let mut rng = SplitMix64::new(seed ^ 0xff);
            let a1 = d.left().clone();
            let coherent = crate::gen::TwistMode::Coherent;
            let m = crate::gen::random_bimodule_datum_on(&mut rng, &coherent, &a1, &a1, d.cover()).unwrap();
            let m2 = crate::gen::random_bimodule_datum_on(&mut rng, &coherent, &a1, &a1, d.cover()).unwrap();
            let out = picard_conjugate(&d, &m, 1e-10).unwrap();
            let rep = validate_gluing_datum(out.datum(), 1e-10).unwrap();
            assert!(rep.cocycle_residual <= 1e-10, "{rep:?}");
            let lhs = picard_conjugate(&d, &tensor_bimodule_data(&m, &m2, 1e-10).unwrap(), 1e-10).unwrap();
            let rhs = tensor_bimodule_data(&out, &picard_conjugate(&d, &m2, 1e-10).unwrap(), 1e-10).unwrap();
            assert!(gluing_data_isomorphic(&lhs, &rhs, 1e-9).is_some());
            let back = picard_conjugate(&dual_bimodule_datum(&d, 1e-10).unwrap(), &out, 1e-10).unwrap();
            assert!(gluing_data_isomorphic(&back, &m, 1e-9).is_some(), "seed {seed}");
            if obstruction_2cocycle(&d, 1e-10).unwrap().max_deviation() > 1e-3 {
                hits += 1;
            }
        }
        assert!(hits > 0);
    }
}
