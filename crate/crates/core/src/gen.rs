//! Seeded random instances.
//!
//! Everything is driven by [`SplitMix64`], so a seed and a [`GenConfig`]
//! reproduce an instance bit for bit on any platform. The draw order is part
//! of the contract and is listed in the README.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::cstar::{AlgebraElement, BElement, ClosedCover, FdCStarAlgebra, SumAlgebraB};
use crate::error::{Error, Result};
use crate::glue::GluingDatum;
use crate::hmod::{AdjointableMap, BModule, BVector, HilbertModule, ModuleVector};
use crate::morita::{BimoduleGluingDatum, EquivalenceBimodule};
use crate::numlin::{CMatrix, C64, ZERO};

/// The splitmix64 generator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `0..n` by the multiply-high method. `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Uniform in `lo..=hi`.
    pub fn range(&mut self, lo: usize, hi: usize) -> usize {
        assert!(lo <= hi, "empty range");
        lo + self.below((hi - lo + 1) as u64) as usize
    }

    pub fn coin(&mut self) -> bool {
        self.next_u64() >> 63 == 1
    }

    /// Standard normal via Box–Muller (cosine branch only).
    pub fn gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }

    /// `(g₁ + i g₂)/√2`, unit variance.
    pub fn complex_gaussian(&mut self) -> C64 {
        let re = self.gaussian();
        let im = self.gaussian();
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    }

    /// A uniformly random phase `e^{iθ}`.
    pub fn phase(&mut self) -> C64 {
        C64::from_polar(1.0, 2.0 * PI * self.next_f64())
    }
}

/// Complex Gaussian matrix, entries drawn in row-major order.
pub fn random_matrix(rng: &mut SplitMix64, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| rng.complex_gaussian())
}

/// Haar-like unitary: Gram–Schmidt (run twice) on the columns of a complex
/// Gaussian matrix, which leaves `R` with a positive diagonal.
pub fn haar_unitary(rng: &mut SplitMix64, n: usize) -> CMatrix {
    loop {
        let g = random_matrix(rng, n, n);
        if let Some(q) = orthonormalize_columns(&g) {
            return q;
        }
    }
}

fn orthonormalize_columns(g: &CMatrix) -> Option<CMatrix> {
    let n = g.rows();
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(g.cols());
    for c in 0..g.cols() {
        let mut v: Vec<C64> = (0..n).map(|r| g[(r, c)]).collect();
        for _ in 0..2 {
            for q in &cols {
                let proj: C64 = q.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                for (x, y) in v.iter_mut().zip(q) {
                    *x -= proj * y;
                }
            }
        }
        let nrm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nrm < 1e-8 {
            return None;
        }
        cols.push(v.into_iter().map(|z| z / nrm).collect());
    }
    Some(CMatrix::from_fn(n, g.cols(), |r, c| cols[c][r]))
}

pub fn random_element(rng: &mut SplitMix64, alg: &FdCStarAlgebra) -> AlgebraElement {
    let blocks = alg.dims().iter().map(|&n| random_matrix(rng, n, n)).collect();
    AlgebraElement::new(alg.clone(), blocks).expect("shapes match")
}

pub fn random_b_element(rng: &mut SplitMix64, b: &SumAlgebraB) -> BElement {
    BElement {
        parts: b.parts().iter().map(|p| random_element(rng, p)).collect(),
    }
}

pub fn random_vector(rng: &mut SplitMix64, x: &HilbertModule) -> ModuleVector {
    let blocks = (0..x.mult().len())
        .map(|p| {
            let (m, n) = x.block_shape(p);
            random_matrix(rng, m, n)
        })
        .collect();
    ModuleVector::new(x.clone(), blocks).expect("shapes match")
}

pub fn random_bvector(rng: &mut SplitMix64, z: &BModule) -> BVector {
    BVector {
        parts: z.parts().iter().map(|p| random_vector(rng, p)).collect(),
    }
}

pub fn random_map(rng: &mut SplitMix64, x: &HilbertModule, y: &HilbertModule) -> Result<AdjointableMap> {
    let blocks = y.mult().iter().zip(x.mult()).map(|(&p, &m)| random_matrix(rng, p, m)).collect();
    AdjointableMap::new(x.clone(), y.clone(), blocks)
}

/// How transition unitaries are drawn.
#[derive(Clone, Debug, PartialEq)]
pub enum TwistMode {
    /// `ζ_ij = V_i V_j*` from per-set unitaries; the cocycle holds exactly.
    Coherent,
    /// Independent unitaries for `i < j`, `ζ_ji = ζ_ij*`.
    RandomUnitary,
    /// Coherent data, with the transitions at block 0 multiplied by the
    /// given phases for the pairs `(0,1), (0,2), …, (1,2), …` in
    /// lexicographic order. Block 0 is put in every cover set.
    PrescribedPhases(Vec<C64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenConfig {
    pub seed: u64,
    pub max_blocks: usize,
    pub max_block_dim: usize,
    pub max_cover_sets: usize,
    pub max_mult: usize,
    pub twist_mode: TwistMode,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            max_blocks: 6,
            max_block_dim: 4,
            max_cover_sets: 4,
            max_mult: 5,
            twist_mode: TwistMode::Coherent,
        }
    }
}

impl GenConfig {
    pub fn with_seed(seed: u64) -> Self {
        GenConfig { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bounds = [
            ("max_blocks", self.max_blocks, 1, 6),
            ("max_block_dim", self.max_block_dim, 1, 4),
            ("max_cover_sets", self.max_cover_sets, 1, 4),
            ("max_mult", self.max_mult, 0, 5),
        ];
        for (name, v, lo, hi) in bounds {
            if v < lo || v > hi {
                return Err(Error::invalid(format!("{name} = {v} outside {lo}..={hi}")));
            }
        }
        if let TwistMode::PrescribedPhases(ph) = &self.twist_mode {
            if ph.iter().any(|z| (z.norm() - 1.0).abs() > 1e-12) {
                return Err(Error::invalid("prescribed phases must have modulus 1"));
            }
            if ph.len() > pair_count(self.max_cover_sets) {
                return Err(Error::invalid(format!(
                    "{} phases need more than {} cover sets",
                    ph.len(),
                    self.max_cover_sets
                )));
            }
        }
        Ok(())
    }
}

fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

pub fn random_algebra(rng: &mut SplitMix64, cfg: &GenConfig) -> FdCStarAlgebra {
    let k = rng.range(1, cfg.max_blocks);
    let dims = (0..k).map(|_| rng.range(1, cfg.max_block_dim)).collect();
    FdCStarAlgebra::new(dims).expect("nonempty")
}

/// A cover with `min_sets..=max_cover_sets` sets. Each label joins each set
/// with probability 1/2; a label left uncovered joins a uniformly chosen set.
pub fn random_cover(rng: &mut SplitMix64, cfg: &GenConfig, prim: usize, min_sets: usize) -> ClosedCover {
    let n = rng.range(min_sets.max(1), cfg.max_cover_sets.max(min_sets));
    let mut sets: Vec<Vec<usize>> = (0..n).map(|_| (0..prim).filter(|_| rng.coin()).collect()).collect();
    for k in 0..prim {
        if !sets.iter().any(|s| s.contains(&k)) {
            let i = rng.below(n as u64) as usize;
            sets[i].push(k);
        }
    }
    ClosedCover::new(prim, sets).expect("covers by construction")
}

pub fn random_module(rng: &mut SplitMix64, cfg: &GenConfig, alg: &FdCStarAlgebra) -> HilbertModule {
    let mult = (0..alg.num_blocks()).map(|_| rng.range(0, cfg.max_mult)).collect();
    HilbertModule::new(alg.clone(), mult).expect("length matches")
}

/// An algebra, a cover and a module.
#[derive(Clone, Debug, PartialEq)]
pub struct ModuleInstance {
    pub algebra: FdCStarAlgebra,
    pub cover: ClosedCover,
    pub module: HilbertModule,
}

pub fn random_module_instance(cfg: &GenConfig) -> Result<ModuleInstance> {
    cfg.validate()?;
    let mut rng = SplitMix64::new(cfg.seed);
    let algebra = random_algebra(&mut rng, cfg);
    let cover = random_cover(&mut rng, cfg, algebra.num_blocks(), 1);
    let module = random_module(&mut rng, cfg, &algebra);
    Ok(ModuleInstance { algebra, cover, module })
}

/// A gluing datum drawn according to `cfg.twist_mode`.
pub fn random_gluing_datum(cfg: &GenConfig) -> Result<GluingDatum> {
    cfg.validate()?;
    let mut rng = SplitMix64::new(cfg.seed);
    let algebra = random_algebra(&mut rng, cfg);
    let min_sets = match &cfg.twist_mode {
        TwistMode::PrescribedPhases(ph) => (1..=4).find(|&n| pair_count(n) >= ph.len()).unwrap_or(1),
        _ => 1,
    };
    let mut cover = random_cover(&mut rng, cfg, algebra.num_blocks(), min_sets);
    let mut mult: Vec<usize> = (0..algebra.num_blocks()).map(|_| rng.range(0, cfg.max_mult)).collect();
    if let TwistMode::PrescribedPhases(_) = cfg.twist_mode {
        let sets = cover
            .sets()
            .iter()
            .map(|s| {
                let mut s = s.clone();
                s.push(0);
                s
            })
            .collect();
        cover = ClosedCover::new(algebra.num_blocks(), sets)?;
        mult[0] = mult[0].max(1);
    }
    let x = HilbertModule::new(algebra, mult)?;
    let mut datum = crate::glue::pull_apart(&x, &cover)?;
    let n = cover.len();
    match &cfg.twist_mode {
        TwistMode::Coherent | TwistMode::PrescribedPhases(_) => {
            let v: Vec<Vec<(usize, CMatrix)>> = (0..n)
                .map(|i| {
                    cover
                        .set(i)
                        .iter()
                        .map(|&k| (k, haar_unitary(&mut rng, x.mult_of(k).unwrap())))
                        .collect()
                })
                .collect();
            let get = |i: usize, k: usize| &v[i].iter().find(|(l, _)| *l == k).unwrap().1;
            for i in 0..n {
                for j in i + 1..n {
                    for k in cover.overlap(&[i, j]) {
                        datum.set_zeta(i, j, k, get(i, k).matmul(&get(j, k).adjoint()))?;
                    }
                }
            }
            if let TwistMode::PrescribedPhases(ph) = &cfg.twist_mode {
                let pairs = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
                for ((i, j), &p) in pairs.zip(ph) {
                    let u = datum.zeta(i, j, 0).expect("block 0 is shared").scale(p);
                    datum.set_zeta(i, j, 0, u)?;
                }
            }
        }
        TwistMode::RandomUnitary => {
            for i in 0..n {
                for j in i + 1..n {
                    for k in cover.overlap(&[i, j]) {
                        datum.set_zeta(i, j, k, haar_unitary(&mut rng, x.mult_of(k).unwrap()))?;
                    }
                }
            }
        }
    }
    Ok(datum)
}

/// An `(A′, A)` equivalence bimodule: `A`, then the block sizes of `A′`
/// (same labels), then one Haar twist per block.
pub fn random_bimodule(cfg: &GenConfig) -> Result<EquivalenceBimodule> {
    cfg.validate()?;
    let mut rng = SplitMix64::new(cfg.seed);
    let right = random_algebra(&mut rng, cfg);
    let left = random_left_algebra(&mut rng, cfg, &right);
    Ok(random_twisted(&mut rng, &left, &right))
}

/// Block sizes for `A′` over the labels of `a`.
pub fn random_left_algebra(rng: &mut SplitMix64, cfg: &GenConfig, a: &FdCStarAlgebra) -> FdCStarAlgebra {
    let dims = a.labels().iter().map(|_| rng.range(1, cfg.max_block_dim)).collect();
    FdCStarAlgebra::with_labels(a.labels().to_vec(), dims).expect("labels are valid")
}

/// Normal-form bimodule over `(left, right)` with Haar twists.
pub fn random_twisted(rng: &mut SplitMix64, left: &FdCStarAlgebra, right: &FdCStarAlgebra) -> EquivalenceBimodule {
    let twist = left.dims().iter().map(|&n| haar_unitary(rng, n)).collect();
    EquivalenceBimodule::new(left.clone(), right.clone(), twist).expect("aligned algebras")
}

/// A bimodule gluing datum over `A′`, `A` and a cover drawn from `cfg`.
/// In the prescribed mode block 0 lies in every set.
pub fn random_bimodule_datum(cfg: &GenConfig) -> Result<BimoduleGluingDatum> {
    cfg.validate()?;
    let mut rng = SplitMix64::new(cfg.seed);
    let right = random_algebra(&mut rng, cfg);
    let left = random_left_algebra(&mut rng, cfg, &right);
    let min_sets = match &cfg.twist_mode {
        TwistMode::PrescribedPhases(ph) => (1..=4).find(|&n| pair_count(n) >= ph.len()).unwrap_or(1),
        _ => 1,
    };
    let mut cover = random_cover(&mut rng, cfg, right.num_blocks(), min_sets);
    if let TwistMode::PrescribedPhases(_) = cfg.twist_mode {
        let sets = cover.sets().iter().map(|s| [s.as_slice(), &[0]].concat()).collect();
        cover = ClosedCover::new(right.num_blocks(), sets)?;
    }
    random_bimodule_datum_on(&mut rng, &cfg.twist_mode, &left, &right, &cover)
}

/// Local bimodules with Haar twists `u_i` and transitions `ν_ij = λ u_i u_j*`.
/// The scalars `λ` are `g_i ḡ_j` for coherent data, independent phases for
/// random data, and coherent ones times the given phases at block 0 for
/// prescribed data.
pub fn random_bimodule_datum_on(
    rng: &mut SplitMix64,
    mode: &TwistMode,
    left: &FdCStarAlgebra,
    right: &FdCStarAlgebra,
    cover: &ClosedCover,
) -> Result<BimoduleGluingDatum> {
    let n = cover.len();
    let parts = (0..n)
        .map(|i| Ok(random_twisted(rng, &left.restrict(cover.set(i))?, &right.restrict(cover.set(i))?)))
        .collect::<Result<Vec<_>>>()?;
    let g: Vec<Vec<C64>> = (0..n).map(|_| random_phases(rng, cover.prim_size())).collect();
    let mut lam = BTreeMap::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in cover.overlap(&[i, j]) {
                let l = match mode {
                    TwistMode::RandomUnitary => rng.phase(),
                    _ => g[i][k] * g[j][k].conj(),
                };
                lam.insert((i, j, k), l);
            }
        }
    }
    if let TwistMode::PrescribedPhases(ph) = mode {
        let pairs = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
        for ((i, j), &p) in pairs.zip(ph) {
            *lam.get_mut(&(i, j, 0)).ok_or_else(|| Error::invalid("block 0 is not shared"))? *= p;
        }
    }
    let nu = lam
        .into_iter()
        .map(|((i, j, k), l)| {
            let u = parts[i].twist_of(k).unwrap().matmul(&parts[j].twist_of(k).unwrap().adjoint());
            ((i, j, k), u.scale(l))
        })
        .collect();
    BimoduleGluingDatum::new(left, right, cover, parts, nu)
}

/// A unitary adjointable map `X → X`.
pub fn random_unitary_map(rng: &mut SplitMix64, x: &HilbertModule) -> AdjointableMap {
    let blocks = x.mult().iter().map(|&m| haar_unitary(rng, m)).collect();
    AdjointableMap::new(x.clone(), x.clone(), blocks).expect("square blocks")
}

/// Element of the unit circle for each label, used as a central unitary.
pub fn random_phases(rng: &mut SplitMix64, n: usize) -> Vec<C64> {
    (0..n).map(|_| rng.phase()).collect()
}

/// A vector with independent entries, for quick checks.
pub fn random_coords(rng: &mut SplitMix64, n: usize) -> Vec<C64> {
    let mut v = vec![ZERO; n];
    for z in v.iter_mut() {
        *z = rng.complex_gaussian();
    }
    v
}
