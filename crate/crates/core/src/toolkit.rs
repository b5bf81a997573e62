//! JSON instance formats, JSON-lines reports, and the `modglue` CLI.
//!
//! Instances are recognised by their keys:
//!
//! - module instance: `{"algebra":{"blocks":[..]},"cover":{"sets":[..]},"module":{"mult":[..]}}`
//! - gluing datum: `{"algebra":..,"cover":..,"modules":[{"mult":[..]},..],"zeta":[{"i","j","k","matrix"}]}`
//! - bimodule: `{"left_blocks":[..],"right_blocks":[..],"twist":[matrix,..]}`
//! - bimodule datum: `{"left_blocks","right_blocks","cover","parts":[{"twist":[..]}],"nu":[..]}`
//!
//! Matrices are lists of rows of `[re, im]` pairs. Block labels are
//! 0-based, and the multiplicities of a local module are listed in
//! increasing label order of its cover set.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::cstar::{ClosedCover, FdCStarAlgebra};
use crate::error::{Error, Result};
use crate::gen::{self, GenConfig, ModuleInstance, SplitMix64, TwistMode};
use crate::glue::{self, GluingDatum};
use crate::hmod::{self, AdjointableMap, BModule, HilbertModule};
use crate::morita::{self, BimoduleGluingDatum, EquivalenceBimodule};
use crate::numlin::{op_norm, unitarity_residual, CMatrix, C64};
use crate::tensor::{self, TensorModel};

// ---------------------------------------------------------------------------
// File formats

type MatrixJson = Vec<Vec<[f64; 2]>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgebraJson {
    pub blocks: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverJson {
    pub sets: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleJson {
    pub mult: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionJson {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub matrix: MatrixJson,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleInstanceJson {
    pub algebra: AlgebraJson,
    pub cover: CoverJson,
    pub module: ModuleJson,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GluingDatumJson {
    pub algebra: AlgebraJson,
    pub cover: CoverJson,
    pub modules: Vec<ModuleJson>,
    pub zeta: Vec<TransitionJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BimoduleJson {
    pub left_blocks: Vec<usize>,
    pub right_blocks: Vec<usize>,
    pub twist: Vec<MatrixJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwistJson {
    pub twist: Vec<MatrixJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BimoduleDatumJson {
    pub left_blocks: Vec<usize>,
    pub right_blocks: Vec<usize>,
    pub cover: CoverJson,
    pub parts: Vec<TwistJson>,
    pub nu: Vec<TransitionJson>,
}

/// Any of the four instance kinds.
#[derive(Clone, Debug, PartialEq)]
pub enum Instance {
    Module(ModuleInstance),
    Gluing(GluingDatum),
    Bimodule(EquivalenceBimodule),
    BimoduleDatum(BimoduleGluingDatum),
}

impl Instance {
    pub fn kind(&self) -> &'static str {
        match self {
            Instance::Module(_) => "module",
            Instance::Gluing(_) => "gluing",
            Instance::Bimodule(_) => "bimodule",
            Instance::BimoduleDatum(_) => "bimodule-datum",
        }
    }

    /// Syntax errors are `Parse`, structural ones `InvalidInput`.
    pub fn parse(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text)?;
        let obj = v.as_object().ok_or_else(|| Error::Parse("instance must be a JSON object".into()))?;
        if obj.contains_key("zeta") {
            gluing_from_json(&serde_json::from_value(v)?).map(Instance::Gluing)
        } else if obj.contains_key("nu") {
            bimodule_datum_from_json(&serde_json::from_value(v)?).map(Instance::BimoduleDatum)
        } else if obj.contains_key("twist") {
            bimodule_from_json(&serde_json::from_value(v)?).map(Instance::Bimodule)
        } else if obj.contains_key("module") {
            module_from_json(&serde_json::from_value(v)?).map(Instance::Module)
        } else {
            Err(Error::Parse("unrecognised instance: expected one of the keys zeta, nu, twist, module".into()))
        }
    }

    pub fn to_value(&self) -> Value {
        let v = match self {
            Instance::Module(m) => serde_json::to_value(module_to_json(m)),
            Instance::Gluing(d) => serde_json::to_value(gluing_to_json(d)),
            Instance::Bimodule(b) => serde_json::to_value(bimodule_to_json(b)),
            Instance::BimoduleDatum(d) => serde_json::to_value(bimodule_datum_to_json(d)),
        };
        v.expect("plain data serializes")
    }

    /// Pretty JSON with a trailing newline. Parsing the output and writing
    /// it again gives the same bytes.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_value()).expect("plain data serializes");
        s.push('\n');
        s
    }

    /// Reads a file and returns the instance with its `sha256:` fingerprint.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let bytes = fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Ok((Self::parse(text)?, file_fingerprint(&bytes)))
    }
}

pub fn file_fingerprint(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::from("sha256:");
    for b in digest.iter() {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

fn matrix_to_json(m: &CMatrix) -> MatrixJson {
    (0..m.rows())
        .map(|r| (0..m.cols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
        .collect()
}

/// An empty row list is the `rows × cols` zero-size matrix of `shape`.
fn matrix_from_json(rows: &MatrixJson, shape: Option<(usize, usize)>, what: &str) -> Result<CMatrix> {
    let r = rows.len();
    let c = rows.first().map_or(shape.map_or(0, |s| s.1), Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::invalid(format!("{what}: rows of different lengths")));
    }
    let (r, c) = if r == 0 { shape.unwrap_or((0, 0)) } else { (r, c) };
    if let Some(s) = shape {
        if s != (r, c) {
            return Err(Error::invalid(format!("{what}: expected a {}×{} matrix, got {r}×{c}", s.0, s.1)));
        }
    }
    if rows.is_empty() {
        return Ok(CMatrix::zeros(r, c));
    }
    let data = rows.iter().flatten().map(|&[re, im]| C64::new(re, im)).collect();
    let m = CMatrix::from_row_major(r, c, data)?;
    m.check_finite()?;
    Ok(m)
}

fn algebra_from_blocks(blocks: &[usize]) -> Result<FdCStarAlgebra> {
    FdCStarAlgebra::new(blocks.to_vec())
}

fn cover_from_json(alg: &FdCStarAlgebra, c: &CoverJson) -> Result<ClosedCover> {
    ClosedCover::new(alg.num_blocks(), c.sets.clone())
}

fn cover_to_json(c: &ClosedCover) -> CoverJson {
    CoverJson { sets: c.sets().to_vec() }
}

fn module_from_json(j: &ModuleInstanceJson) -> Result<ModuleInstance> {
    let algebra = algebra_from_blocks(&j.algebra.blocks)?;
    let cover = cover_from_json(&algebra, &j.cover)?;
    let module = HilbertModule::new(algebra.clone(), j.module.mult.clone())?;
    Ok(ModuleInstance { algebra, cover, module })
}

fn module_to_json(m: &ModuleInstance) -> ModuleInstanceJson {
    ModuleInstanceJson {
        algebra: AlgebraJson {
            blocks: m.algebra.dims().to_vec(),
        },
        cover: cover_to_json(&m.cover),
        module: ModuleJson {
            mult: m.module.mult().to_vec(),
        },
    }
}

/// Transitions as given in a file, checked against the local shapes.
fn transitions_from_json(
    z: &BModule,
    list: &[TransitionJson],
) -> Result<Vec<((usize, usize, usize), CMatrix)>> {
    let cover = z.cover();
    list.iter()
        .map(|t| {
            if t.i >= cover.len() || t.j >= cover.len() {
                return Err(Error::invalid(format!("transition ({},{}) names a missing cover set", t.i, t.j)));
            }
            if !cover.overlap(&[t.i, t.j]).contains(&t.k) {
                return Err(Error::invalid(format!(
                    "block {} is not in the overlap of sets {} and {}",
                    t.k, t.i, t.j
                )));
            }
            let shape = (z.mult(t.i, t.k).unwrap(), z.mult(t.j, t.k).unwrap());
            let what = format!("transition ({},{}) at block {}", t.i, t.j, t.k);
            Ok(((t.i, t.j, t.k), matrix_from_json(&t.matrix, Some(shape), &what)?))
        })
        .collect()
}

/// Entries with `i < j`, plus any entry not implied by the defaults
/// (`ζ_ii = I`, `ζ_ji = ζ_ij*`).
fn transitions_to_json(d: &GluingDatum) -> Vec<TransitionJson> {
    d.zeta_entries()
        .filter(|(&(i, j, k), u)| {
            if i < j {
                true
            } else if i == j {
                **u != CMatrix::identity(u.rows())
            } else {
                d.zeta(j, i, k).map(CMatrix::adjoint).as_ref() != Some(*u)
            }
        })
        .map(|(&(i, j, k), u)| TransitionJson {
            i,
            j,
            k,
            matrix: matrix_to_json(u),
        })
        .collect()
}

fn gluing_from_json(j: &GluingDatumJson) -> Result<GluingDatum> {
    let algebra = algebra_from_blocks(&j.algebra.blocks)?;
    let cover = cover_from_json(&algebra, &j.cover)?;
    if j.modules.len() != cover.len() {
        return Err(Error::invalid(format!(
            "{} local modules for {} cover sets",
            j.modules.len(),
            cover.len()
        )));
    }
    let parts = j
        .modules
        .iter()
        .zip(cover.sets())
        .map(|(m, s)| HilbertModule::new(algebra.restrict(s)?, m.mult.clone()))
        .collect::<Result<Vec<_>>>()?;
    let z = BModule::new(&algebra, &cover, parts)?;
    let entries = transitions_from_json(&z, &j.zeta)?;
    GluingDatum::new(z, entries)
}

fn gluing_to_json(d: &GluingDatum) -> GluingDatumJson {
    GluingDatumJson {
        algebra: AlgebraJson {
            blocks: d.base().dims().to_vec(),
        },
        cover: cover_to_json(d.cover()),
        modules: d
            .modules()
            .parts()
            .iter()
            .map(|p| ModuleJson { mult: p.mult().to_vec() })
            .collect(),
        zeta: transitions_to_json(d),
    }
}

fn twists_from_json(list: &[MatrixJson], what: &str) -> Result<Vec<CMatrix>> {
    list.iter()
        .enumerate()
        .map(|(p, m)| {
            let n = m.len();
            matrix_from_json(m, Some((n, n)), &format!("{what} twist {p}"))
        })
        .collect()
}

fn bimodule_from_json(j: &BimoduleJson) -> Result<EquivalenceBimodule> {
    let left = algebra_from_blocks(&j.left_blocks)?;
    let right = algebra_from_blocks(&j.right_blocks)?;
    EquivalenceBimodule::new(left, right, twists_from_json(&j.twist, "bimodule")?)
}

fn bimodule_to_json(b: &EquivalenceBimodule) -> BimoduleJson {
    BimoduleJson {
        left_blocks: b.left().dims().to_vec(),
        right_blocks: b.right().dims().to_vec(),
        twist: b.twist().iter().map(matrix_to_json).collect(),
    }
}

fn bimodule_datum_from_json(j: &BimoduleDatumJson) -> Result<BimoduleGluingDatum> {
    let left = algebra_from_blocks(&j.left_blocks)?;
    let right = algebra_from_blocks(&j.right_blocks)?;
    let cover = cover_from_json(&right, &j.cover)?;
    if j.parts.len() != cover.len() {
        return Err(Error::invalid(format!("{} parts for {} cover sets", j.parts.len(), cover.len())));
    }
    let parts = j
        .parts
        .iter()
        .zip(cover.sets())
        .enumerate()
        .map(|(i, (p, s))| {
            EquivalenceBimodule::new(
                left.restrict(s)?,
                right.restrict(s)?,
                twists_from_json(&p.twist, &format!("part {i}"))?,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let z = BModule::new(&right, &cover, parts.iter().map(EquivalenceBimodule::right_module).collect())?;
    let nu = transitions_from_json(&z, &j.nu)?;
    BimoduleGluingDatum::new(&left, &right, &cover, parts, nu)
}

fn bimodule_datum_to_json(d: &BimoduleGluingDatum) -> BimoduleDatumJson {
    BimoduleDatumJson {
        left_blocks: d.left().dims().to_vec(),
        right_blocks: d.right().dims().to_vec(),
        cover: cover_to_json(d.cover()),
        parts: d
            .parts()
            .iter()
            .map(|p| TwistJson {
                twist: p.twist().iter().map(matrix_to_json).collect(),
            })
            .collect(),
        nu: transitions_to_json(d.datum()),
    }
}

// ---------------------------------------------------------------------------
// Reports

/// One line of a report file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub check: String,
    pub pass: bool,
    /// `null` when the check could not produce a finite residual.
    pub max_residual: Option<f64>,
    pub tol: f64,
    pub fingerprint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial: Option<u64>,
    /// Advisory checks are reported but do not affect the exit code.
    #[serde(default, skip_serializing_if = "is_false")]
    pub advisory: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub details: Value,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl Report {
    /// `pass = residual ≤ tol`.
    pub fn numeric(check: &str, residual: f64, tol: f64, fingerprint: &str) -> Self {
        Report {
            check: check.to_string(),
            pass: residual <= tol,
            max_residual: residual.is_finite().then_some(residual),
            tol,
            fingerprint: fingerprint.to_string(),
            trial: None,
            advisory: false,
            wall_ms: None,
            details: Value::Null,
        }
    }

    /// Integer equality, reported as residual `|expected − got|` at tolerance 0.
    pub fn exact(check: &str, expected: usize, got: usize, fingerprint: &str) -> Self {
        Self::numeric(check, expected.abs_diff(got) as f64, 0.0, fingerprint)
            .with_details(json!({"expected": expected, "got": got}))
    }

    /// A check that raised an error instead of producing residuals.
    pub fn error(check: &str, err: &Error, tol: f64, fingerprint: &str) -> Self {
        let mut r = Self::numeric(check, f64::INFINITY, tol, fingerprint);
        r.details = json!({"error": err.to_string()});
        r
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = details;
        self
    }

    pub fn advisory(mut self) -> Self {
        self.advisory = true;
        self
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("plain data serializes")
    }

    fn summary(&self) -> String {
        let verdict = if self.pass {
            "PASS"
        } else if self.advisory {
            "NOTE"
        } else {
            "FAIL"
        };
        let res = self.max_residual.map_or("n/a".to_string(), |r| format!("{r:.3e}"));
        let trial = self.trial.map_or(String::new(), |t| format!(" trial={t}"));
        format!("{verdict} {}{trial} max_residual={res} tol={:.1e}", self.check, self.tol)
    }
}

/// `0` when every non-advisory report passes, `2` otherwise.
pub fn exit_code(reports: &[Report]) -> i32 {
    if reports.iter().all(|r| r.pass || r.advisory) {
        0
    } else {
        2
    }
}

/// Exit code for an error that stopped a command.
pub fn error_code(e: &Error) -> i32 {
    match e {
        Error::Parse(_) | Error::Io(_) => 3,
        Error::InvalidInput(_) => 1,
        _ => 2,
    }
}

// ---------------------------------------------------------------------------
// Checks

pub fn cfg_fingerprint(cfg: &GenConfig) -> String {
    let mode = match &cfg.twist_mode {
        TwistMode::Coherent => "coherent".to_string(),
        TwistMode::RandomUnitary => "random".to_string(),
        TwistMode::PrescribedPhases(p) => format!(
            "phases({})",
            p.iter().map(|z| format!("{}:{}", z.re, z.im)).collect::<Vec<_>>().join(",")
        ),
    };
    format!(
        "seed={};blocks={};dim={};sets={};mult={};twist={mode}",
        cfg.seed, cfg.max_blocks, cfg.max_block_dim, cfg.max_cover_sets, cfg.max_mult
    )
}

fn map_distance(a: &AdjointableMap, b: &AdjointableMap) -> Result<f64> {
    a.blocks()
        .iter()
        .zip(b.blocks())
        .map(|(x, y)| op_norm(&(x - y)))
        .try_fold(0.0, |acc, r| r.map(|r| f64::max(acc, r)))
}

/// `Φ^X` is unitary and natural with respect to a random map `X → X`.
pub fn check_phi(m: &ModuleInstance, tol: f64, seed: u64, fp: &str) -> Result<Vec<Report>> {
    let phi = glue::phi_iso(&m.module, &m.cover, tol)?;
    let unitary = phi
        .map
        .blocks()
        .iter()
        .map(|b| unitarity_residual(b).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    let mut rng = SplitMix64::new(seed);
    let alpha = gen::random_map(&mut rng, &m.module, &m.module)?;
    let ga = glue::glue_morphism(&glue::pull_apart_map(&alpha, &m.cover)?, &phi.glued, &phi.glued, tol)?;
    let lhs = hmod::compose(&phi.map, &alpha)?;
    let rhs = hmod::compose(&ga, &phi.map)?;
    let natural = map_distance(&lhs, &rhs)? / alpha.norm().max(1.0);
    Ok(vec![
        Report::numeric("roundtrip.phi.unitary", unitary, tol, fp),
        Report::numeric("roundtrip.phi.natural", natural, tol, fp),
    ])
}

/// `ε` is a unitary morphism of gluing data.
pub fn check_epsilon(d: &GluingDatum, tol: f64, fp: &str) -> Vec<Report> {
    match glue::epsilon_iso(d, tol) {
        Ok(e) => vec![
            Report::numeric("roundtrip.epsilon.unitary", e.unitary_residual, tol, fp),
            Report::numeric("roundtrip.epsilon.intertwining", e.intertwining_residual, tol, fp),
        ],
        Err(err) => vec![Report::error("roundtrip.epsilon", &err, tol, fp)],
    }
}

pub fn check_descent(d: &GluingDatum, tol: f64, seed: u64, samples: usize, suffix: &str, fp: &str) -> Result<Vec<Report>> {
    let r = glue::descent_identities_check(d, tol, seed, samples)?;
    let name = |s: &str| format!("descent.{s}{suffix}");
    let dims = json!({"glue_dim": r.glue_dim, "kernel_dim": r.kernel_dim,
        "glued_tensor_dim": r.glued_tensor_dim, "tensor_kernel_dim": r.tensor_kernel_dim});
    Ok(vec![
        Report::numeric(&name("epsilon_delta"), r.epsilon_delta, tol, fp),
        Report::numeric(&name("coassociativity"), r.coassociativity, tol, fp),
        Report::numeric(&name("delta_isometry"), r.delta_isometry, tol, fp),
        Report::exact(&name("kernel_dim"), r.glue_dim, r.kernel_dim, fp),
        Report::numeric(&name("kernel_subspace"), r.kernel_distance, tol, fp).with_details(dims.clone()),
        Report::exact(&name("tensor_kernel_dim"), r.glued_tensor_dim, r.tensor_kernel_dim, fp),
        Report::numeric(&name("tensor_kernel_subspace"), r.tensor_kernel_distance, tol, fp).with_details(dims),
        Report::numeric(&name("exactness_isometry"), r.exactness_isometry, tol, fp),
    ])
}

pub fn check_delta(d: &GluingDatum, tol: f64, seed: u64, fp: &str) -> Result<Vec<Report>> {
    let r = glue::delta_check(d, seed, 4)?;
    Ok(vec![
        Report::numeric("delta.b_linear", r.b_linearity, tol, fp),
        Report::numeric("delta.isometry", r.isometry, tol, fp),
        Report::numeric("delta.isometry_level2", r.isometry_level2, tol, fp),
    ])
}

pub fn check_eta_image(m: &ModuleInstance, tol: f64, fp: &str) -> Result<Vec<Report>> {
    let r = glue::eta_image_check(&m.module, &m.cover, tol)?;
    Ok(vec![
        Report::exact("eta_image.kernel_dim", r.x_dim, r.kernel_dim, fp),
        Report::numeric("eta_image.eta", r.eta_distance, tol, fp),
        Report::numeric("eta_image.phi", r.phi_distance, tol, fp),
    ])
}

/// Glues a bimodule datum, validates the result and the round trip.
pub fn check_morita(d: &BimoduleGluingDatum, tol: f64, fp: &str) -> (Vec<Report>, Option<EquivalenceBimodule>) {
    let g = match morita::glue_bimodules(d, tol) {
        Ok(g) => g,
        Err(err) => {
            let r = Report::error("morita.glue", &err, tol, fp);
            let r = match err {
                Error::CocycleViolated { deficit } => r.with_details(json!({"deficit": deficit})),
                _ => r,
            };
            return (vec![r], None);
        }
    };
    let mut out = Vec::new();
    match morita::validate_bimodule(&g.bimodule) {
        Ok(v) => {
            let res = if v.shapes && v.aligned && v.left_full && v.right_full {
                v.max_residual()
            } else {
                f64::INFINITY
            };
            out.push(Report::numeric("morita.validate", res, tol, fp));
        }
        Err(err) => out.push(Report::error("morita.validate", &err, tol, fp)),
    }
    match morita::bimodule_epsilon_residual(d, &g) {
        Ok(r) => out.push(Report::numeric("morita.epsilon", r, tol, fp)),
        Err(err) => out.push(Report::error("morita.epsilon", &err, tol, fp)),
    }
    (out, Some(g.bimodule))
}

/// `glue(pull_apart(M)) ≅ M` for a bimodule and a cover.
pub fn check_morita_phi(m: &EquivalenceBimodule, cover: &ClosedCover, tol: f64, fp: &str) -> Result<Report> {
    let d = morita::pull_apart_bimodule(m, cover)?;
    let g = morita::glue_bimodules(&d, tol)?;
    let res = morita::bimodules_isomorphic(&g.bimodule, m, f64::INFINITY).map_or(f64::INFINITY, |w| w.residual);
    Ok(Report::numeric("morita.phi", res, tol, fp))
}

pub fn check_obstruction(d: &BimoduleGluingDatum, tol: f64, fp: &str) -> Result<Vec<Report>> {
    let f = morita::obstruction_2cocycle(d, tol)?;
    let values: Vec<Value> = f
        .values
        .iter()
        .filter(|(&(i, j, l, _), _)| i < j && j < l)
        .map(|(&(i, j, l, k), z)| json!({"i": i, "j": j, "l": l, "k": k, "f": [z.re, z.im]}))
        .collect();
    Ok(vec![
        Report::numeric("obstruction.scalar", f.nonscalar_residual, tol, fp),
        Report::numeric("obstruction.cech", f.coboundary_residual(d.cover()), tol, fp),
        Report::numeric("obstruction.trivial", f.max_deviation(), tol, fp)
            .advisory()
            .with_details(json!({ "values": values })),
    ])
}

pub fn check_picard(d: &BimoduleGluingDatum, m: &BimoduleGluingDatum, tol: f64, fp: &str) -> Result<(Vec<Report>, BimoduleGluingDatum)> {
    let out = morita::picard_conjugate(d, m, tol)?;
    let rep = glue::validate_gluing_datum(out.datum(), tol)?;
    Ok((
        vec![
            Report::numeric("picard.unitary", rep.unitary_residual.max(rep.involutive_residual), tol, fp),
            Report::numeric("picard.cocycle", rep.cocycle_residual, tol, fp),
        ],
        out,
    ))
}

/// Pair and triple models against the balanced-tensor oracle.
pub fn check_oracle(z: &BModule, tol: f64, fp: &str) -> Result<Vec<Report>> {
    let mut out = Vec::new();
    for (name, arity) in [("oracle.pair", 2), ("oracle.triple", 3)] {
        let model = TensorModel::new(z, arity)?;
        let ag = tensor::model_oracle(&model)?.check()?;
        let res = if ag.dims_match() { ag.max_residual() } else { f64::INFINITY };
        out.push(Report::numeric(name, res, tol, fp).with_details(json!({
            "oracle_dim": ag.oracle_dim, "model_dim": ag.model_dim})));
    }
    Ok(out)
}

fn with_config(seed: u64, mode: TwistMode) -> GenConfig {
    GenConfig {
        twist_mode: mode,
        ..GenConfig::with_seed(seed)
    }
}

/// Config for oracle checks, small enough for the dense oracle.
pub fn oracle_config(seed: u64) -> GenConfig {
    GenConfig {
        max_blocks: 3,
        max_block_dim: 2,
        max_cover_sets: 3,
        max_mult: 2,
        ..GenConfig::with_seed(seed)
    }
}

/// The per-seed battery behind `suite`.
pub fn suite_trial(seed: u64, tol: f64) -> Vec<Report> {
    let mut out = Vec::new();
    let mut push = |r: Result<Vec<Report>>, name: &str, fp: &str| match r {
        Ok(v) => out.extend(v),
        Err(e) => out.push(Report::error(name, &e, tol, fp)),
    };
    let coherent = with_config(seed, TwistMode::Coherent);
    let fp = cfg_fingerprint(&coherent);
    push(gen::random_module_instance(&coherent).and_then(|m| check_phi(&m, tol, seed, &fp)), "roundtrip.phi", &fp);
    push(gen::random_module_instance(&coherent).and_then(|m| check_eta_image(&m, tol, &fp)), "eta_image", &fp);
    push(gen::random_gluing_datum(&coherent).map(|d| check_epsilon(&d, tol, &fp)), "roundtrip.epsilon", &fp);
    push(gen::random_gluing_datum(&coherent).and_then(|d| check_delta(&d, tol, seed, &fp)), "delta", &fp);
    push(gen::random_gluing_datum(&coherent).and_then(|d| check_descent(&d, tol, seed, 4, "", &fp)), "descent", &fp);

    let twisted = with_config(seed, TwistMode::RandomUnitary);
    let tfp = cfg_fingerprint(&twisted);
    push(
        gen::random_gluing_datum(&twisted).and_then(|d| check_descent(&d, tol, seed, 4, ".twisted", &tfp)),
        "descent.twisted",
        &tfp,
    );

    push(
        gen::random_bimodule_datum(&coherent).map(|d| check_morita(&d, tol, &fp).0),
        "morita",
        &fp,
    );
    push(
        gen::random_bimodule_datum(&twisted).and_then(|d| {
            let mut rng = SplitMix64::new(seed ^ 0x5eed);
            let a1 = d.left().clone();
            let m = gen::random_bimodule_datum_on(&mut rng, &TwistMode::Coherent, &a1, &a1, d.cover())?;
            Ok(check_picard(&d, &m, tol, &tfp)?.0)
        }),
        "picard",
        &tfp,
    );
    push(
        gen::random_bimodule_datum(&twisted).and_then(|d| check_obstruction(&d, tol, &tfp)),
        "obstruction",
        &tfp,
    );
    let small = oracle_config(seed);
    let sfp = cfg_fingerprint(&small);
    push(
        gen::random_gluing_datum(&small).and_then(|d| check_oracle(d.modules(), tol, &sfp)),
        "oracle",
        &sfp,
    );
    out
}

// ---------------------------------------------------------------------------
// CLI

#[derive(Debug, Parser)]
#[command(name = "modglue", version, about = "Glue Hilbert modules and Morita equivalences over finite-dimensional C*-algebras")]
pub struct Cli {
    /// Residual tolerance for every numeric check.
    #[arg(long, global = true, env = "MODGLUE_TOL", default_value_t = 1e-9)]
    pub tol: f64,
    /// Seed for generated instances and sampled checks.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Number of seeds for `suite`.
    #[arg(long, global = true, default_value_t = 200)]
    pub trials: u64,
    /// Write JSON-lines reports here.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Leave wall times out of reports, so reruns are byte-identical.
    #[arg(long, global = true)]
    pub no_timing: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate an instance file.
    Validate { file: PathBuf },
    /// Pull a module instance apart into a gluing datum.
    Pullapart {
        file: PathBuf,
        #[command(flatten)]
        emit: Emit,
    },
    /// Glue a gluing datum; emits the glued module instance.
    Glue {
        file: PathBuf,
        #[command(flatten)]
        emit: Emit,
    },
    /// Check `Φ` (module instances) or `ε` (gluing and bimodule data). Without
    /// a file, generates both from `--seed`.
    Roundtrip { file: Option<PathBuf> },
    /// Check the descent identities on a gluing datum (or a coherent one from `--seed`).
    Descent {
        file: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        samples: usize,
    },
    /// Glue a bimodule datum; emits the glued bimodule.
    MoritaGlue {
        file: PathBuf,
        #[command(flatten)]
        emit: Emit,
    },
    /// Obstruction scalars of a bimodule datum.
    Obstruction { file: PathBuf },
    /// Conjugate a bimodule datum `M` over `(A′, A′)` by `D` over `(A′, A)`.
    PicardConjugate {
        d: PathBuf,
        m: PathBuf,
        #[command(flatten)]
        emit: Emit,
    },
    /// Generate an instance from `--seed`.
    Gen(GenArgs),
    /// Run the check battery over seeds `seed .. seed + trials`.
    Suite,
}

#[derive(Debug, Args)]
pub struct Emit {
    /// Write the produced instance here instead of stdout.
    #[arg(long)]
    pub emit: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Module,
    Gluing,
    Bimodule,
    BimoduleDatum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Twist {
    Coherent,
    Random,
    Phases,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value_t = Kind::Gluing)]
    pub kind: Kind,
    #[arg(long, value_enum, default_value_t = Twist::Coherent)]
    pub twist: Twist,
    /// Phases for `--twist phases`, as `re` or `re:im`, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub phases: Vec<String>,
    #[arg(long, default_value_t = 6)]
    pub max_blocks: usize,
    #[arg(long, default_value_t = 4)]
    pub max_block_dim: usize,
    #[arg(long, default_value_t = 4)]
    pub max_cover_sets: usize,
    #[arg(long, default_value_t = 5)]
    pub max_mult: usize,
    #[command(flatten)]
    pub emit: Emit,
}

fn parse_phase(s: &str) -> Result<C64> {
    let bad = || Error::invalid(format!("bad phase {s:?}"));
    let mut it = s.split(':');
    let re: f64 = it.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
    let im: f64 = match it.next() {
        Some(t) => t.trim().parse().map_err(|_| bad())?,
        None => 0.0,
    };
    if it.next().is_some() {
        return Err(bad());
    }
    Ok(C64::new(re, im))
}

impl GenArgs {
    pub fn config(&self, seed: u64) -> Result<GenConfig> {
        let twist_mode = match self.twist {
            Twist::Coherent => TwistMode::Coherent,
            Twist::Random => TwistMode::RandomUnitary,
            Twist::Phases => TwistMode::PrescribedPhases(self.phases.iter().map(|s| parse_phase(s)).collect::<Result<_>>()?),
        };
        let cfg = GenConfig {
            seed,
            max_blocks: self.max_blocks,
            max_block_dim: self.max_block_dim,
            max_cover_sets: self.max_cover_sets,
            max_mult: self.max_mult,
            twist_mode,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// What a command produced.
#[derive(Debug, Default)]
pub struct Outcome {
    pub reports: Vec<Report>,
    pub instance: Option<Instance>,
}

fn expect_kind<T>(inst: Instance, what: &str, f: impl FnOnce(Instance) -> Option<T>) -> Result<T> {
    let kind = inst.kind();
    f(inst).ok_or_else(|| Error::invalid(format!("expected a {what}, got a {kind}")))
}

fn load_gluing(path: &Path) -> Result<(GluingDatum, String)> {
    let (inst, fp) = Instance::load(path)?;
    let d = expect_kind(inst, "gluing datum", |i| match i {
        Instance::Gluing(d) => Some(d),
        _ => None,
    })?;
    Ok((d, fp))
}

fn load_bimodule_datum(path: &Path) -> Result<(BimoduleGluingDatum, String)> {
    let (inst, fp) = Instance::load(path)?;
    let d = expect_kind(inst, "bimodule datum", |i| match i {
        Instance::BimoduleDatum(d) => Some(d),
        _ => None,
    })?;
    Ok((d, fp))
}

pub fn validate_reports(inst: &Instance, tol: f64, fp: &str) -> Result<Vec<Report>> {
    Ok(match inst {
        Instance::Module(m) => {
            m.cover.check_algebra(&m.algebra)?;
            vec![Report::numeric("validate.module", 0.0, tol, fp)]
        }
        Instance::Gluing(d) => {
            let r = glue::validate_gluing_datum(d, tol)?;
            vec![
                Report::numeric("validate.unitary", r.unitary_residual, tol, fp),
                Report::numeric("validate.involutive", r.involutive_residual, tol, fp),
                Report::numeric("validate.cocycle", r.cocycle_residual, tol, fp).advisory(),
            ]
        }
        Instance::Bimodule(b) => {
            let r = morita::validate_bimodule(b)?;
            let flag = |ok: bool| if ok { 0.0 } else { 1.0 };
            vec![
                Report::numeric("validate.shapes", flag(r.shapes), 0.0, fp),
                Report::numeric("validate.aligned", flag(r.aligned), 0.0, fp),
                Report::numeric("validate.full", flag(r.left_full && r.right_full), 0.0, fp),
                Report::numeric("validate.twist_unitary", r.twist_residual, tol, fp),
                Report::numeric("validate.compatibility", r.compatibility_residual, tol, fp),
                Report::numeric("validate.left_action", r.action_residual, tol, fp),
                Report::numeric("validate.adjointness", r.adjointness_residual, tol, fp),
            ]
        }
        Instance::BimoduleDatum(d) => {
            let r = morita::validate_bimodule_datum(d, tol)?;
            let parts = if r.parts_valid { r.parts_residual } else { f64::INFINITY };
            vec![
                Report::numeric("validate.parts", parts, tol, fp),
                Report::numeric("validate.unitary", r.transitions.unitary_residual, tol, fp),
                Report::numeric("validate.involutive", r.transitions.involutive_residual, tol, fp),
                Report::numeric("validate.bimodule_maps", r.bimodule_map_residual, tol, fp),
                Report::numeric("validate.cocycle", r.transitions.cocycle_residual, tol, fp).advisory(),
            ]
        }
    })
}

/// Runs one command. Errors that stop a command before any check runs are
/// returned as `Err`; failed checks are failing reports.
pub fn execute(cli: &Cli) -> Result<Outcome> {
    let tol = cli.tol;
    if !(tol > 0.0) {
        return Err(Error::invalid("--tol must be positive"));
    }
    let seed = cli.seed;
    let mut out = Outcome::default();
    match &cli.command {
        Command::Validate { file } => {
            let (inst, fp) = Instance::load(file)?;
            out.reports = validate_reports(&inst, tol, &fp)?;
        }
        Command::Pullapart { file, .. } => {
            let (inst, fp) = Instance::load(file)?;
            let m = expect_kind(inst, "module instance", |i| match i {
                Instance::Module(m) => Some(m),
                _ => None,
            })?;
            let d = glue::pull_apart(&m.module, &m.cover)?;
            let r = glue::validate_gluing_datum(&d, tol)?;
            out.reports.push(Report::numeric("pullapart.valid", r.max_residual(), tol, &fp));
            out.instance = Some(Instance::Gluing(d));
        }
        Command::Glue { file, .. } => {
            let (d, fp) = load_gluing(file)?;
            match glue::glue(&d, tol) {
                Ok(g) => {
                    let details = json!({"mult": g.module().mult()});
                    out.reports.push(Report::numeric("glue.isometry", g.isometry_residual(), tol, &fp).with_details(details));
                    out.reports.push(Report::numeric("glue.constraint", g.constraint_residual(), tol, &fp));
                    out.instance = Some(Instance::Module(ModuleInstance {
                        algebra: d.base().clone(),
                        cover: d.cover().clone(),
                        module: g.module().clone(),
                    }));
                }
                Err(e @ Error::InvalidInput(_)) => return Err(e),
                Err(e) => out.reports.push(Report::error("glue", &e, tol, &fp)),
            }
        }
        Command::Roundtrip { file: Some(file) } => {
            let (inst, fp) = Instance::load(file)?;
            match &inst {
                Instance::Module(m) => out.reports = check_phi(m, tol, seed, &fp)?,
                Instance::Gluing(d) => out.reports = check_epsilon(d, tol, &fp),
                Instance::BimoduleDatum(d) => out.reports = check_morita(d, tol, &fp).0,
                Instance::Bimodule(_) => return Err(Error::invalid("roundtrip needs a cover; use a bimodule datum")),
            }
        }
        Command::Roundtrip { file: None } => {
            let cfg = GenConfig::with_seed(seed);
            let fp = cfg_fingerprint(&cfg);
            out.reports = check_phi(&gen::random_module_instance(&cfg)?, tol, seed, &fp)?;
            out.reports.extend(check_epsilon(&gen::random_gluing_datum(&cfg)?, tol, &fp));
        }
        Command::Descent { file, samples } => {
            let (d, fp) = match file {
                Some(f) => load_gluing(f)?,
                None => {
                    let cfg = GenConfig::with_seed(seed);
                    (gen::random_gluing_datum(&cfg)?, cfg_fingerprint(&cfg))
                }
            };
            out.reports = check_descent(&d, tol, seed, *samples, "", &fp)?;
        }
        Command::MoritaGlue { file, .. } => {
            let (d, fp) = load_bimodule_datum(file)?;
            let (reports, glued) = check_morita(&d, tol, &fp);
            out.reports = reports;
            out.instance = glued.map(Instance::Bimodule);
        }
        Command::Obstruction { file } => {
            let (d, fp) = load_bimodule_datum(file)?;
            match check_obstruction(&d, tol, &fp) {
                Ok(r) => out.reports = r,
                Err(e @ Error::ModelViolation { .. }) => out.reports.push(Report::error("obstruction.scalar", &e, tol, &fp)),
                Err(e) => return Err(e),
            }
        }
        Command::PicardConjugate { d, m, .. } => {
            let (dd, fd) = load_bimodule_datum(d)?;
            let (mm, fm) = load_bimodule_datum(m)?;
            let fp = format!("{fd}+{fm}");
            let (reports, conj) = check_picard(&dd, &mm, tol, &fp)?;
            out.reports = reports;
            out.instance = Some(Instance::BimoduleDatum(conj));
        }
        Command::Gen(args) => {
            let cfg = args.config(seed)?;
            out.instance = Some(match args.kind {
                Kind::Module => Instance::Module(gen::random_module_instance(&cfg)?),
                Kind::Gluing => Instance::Gluing(gen::random_gluing_datum(&cfg)?),
                Kind::Bimodule => Instance::Bimodule(gen::random_bimodule(&cfg)?),
                Kind::BimoduleDatum => Instance::BimoduleDatum(gen::random_bimodule_datum(&cfg)?),
            });
        }
        Command::Suite => {
            let timing = !cli.no_timing;
            let trials: Vec<Vec<Report>> = (0..cli.trials)
                .into_par_iter()
                .map(|t| {
                    let start = Instant::now();
                    let mut reports = suite_trial(seed.wrapping_add(t), tol);
                    let ms = start.elapsed().as_secs_f64() * 1e3;
                    for r in &mut reports {
                        r.trial = Some(t);
                        if timing {
                            r.wall_ms = Some(ms);
                        }
                    }
                    reports
                })
                .collect();
            out.reports = trials.into_iter().flatten().collect();
        }
    }
    Ok(out)
}

fn emit_target(cmd: &Command) -> Option<&Option<PathBuf>> {
    match cmd {
        Command::Pullapart { emit, .. }
        | Command::Glue { emit, .. }
        | Command::MoritaGlue { emit, .. }
        | Command::PicardConjugate { emit, .. } => Some(&emit.emit),
        Command::Gen(args) => Some(&args.emit.emit),
        _ => None,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Parses arguments, runs the command, writes reports and summary, and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let start = Instant::now();
    let result = execute(&cli);
    let ms = start.elapsed().as_secs_f64() * 1e3;
    let mut outcome = match result {
        Ok(o) => o,
        Err(e) => {
            eprintln!("modglue: {e}");
            return error_code(&e);
        }
    };
    if !cli.no_timing && !matches!(cli.command, Command::Suite) {
        for r in &mut outcome.reports {
            r.wall_ms = Some(ms);
        }
    }
    if let Some(path) = &cli.out {
        let mut text = String::new();
        for r in &outcome.reports {
            text.push_str(&r.to_line());
            text.push('\n');
        }
        if let Err(e) = write_file(path, &text) {
            eprintln!("modglue: {e}");
            return 3;
        }
    }
    if let Some(inst) = &outcome.instance {
        match emit_target(&cli.command) {
            Some(Some(path)) => {
                if let Err(e) = write_file(path, &inst.to_json()) {
                    eprintln!("modglue: {e}");
                    return 3;
                }
            }
            _ => print!("{}", inst.to_json()),
        }
    }
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    if matches!(cli.command, Command::Suite) {
        for line in suite_summary(&outcome.reports) {
            let _ = writeln!(lock, "{line}");
        }
    } else {
        // The instance, if printed, owns stdout; the summary goes to stderr.
        let printed = outcome.instance.is_some() && matches!(emit_target(&cli.command), Some(None));
        for r in &outcome.reports {
            if printed {
                eprintln!("{}", r.summary());
            } else {
                let _ = writeln!(lock, "{}", r.summary());
            }
        }
    }
    exit_code(&outcome.reports)
}

/// One line per check name: passes, total and worst residual.
fn suite_summary(reports: &[Report]) -> Vec<String> {
    let mut names: Vec<&str> = Vec::new();
    for r in reports {
        if !names.contains(&r.check.as_str()) {
            names.push(&r.check);
        }
    }
    let mut lines: Vec<String> = names
        .iter()
        .map(|name| {
            let rs: Vec<&Report> = reports.iter().filter(|r| r.check == *name).collect();
            let passed = rs.iter().filter(|r| r.pass).count();
            let worst = rs
                .iter()
                .map(|r| r.max_residual.unwrap_or(f64::INFINITY))
                .fold(0.0, f64::max);
            let verdict = if passed == rs.len() {
                "PASS"
            } else if rs.iter().all(|r| r.pass || r.advisory) {
                "NOTE"
            } else {
                "FAIL"
            };
            format!("{verdict} {name} {passed}/{} worst={worst:.3e}", rs.len())
        })
        .collect();
    let failed = reports.iter().filter(|r| !r.pass && !r.advisory).count();
    lines.push(format!("{} reports, {failed} failed", reports.len()));
    lines
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instance_round_trips_are_byte_identical() {
        for seed in 0..5 {
            let cfg = GenConfig::with_seed(seed);
            let insts = [
                Instance::Module(gen::random_module_instance(&cfg).unwrap()),
                Instance::Gluing(gen::random_gluing_datum(&cfg).unwrap()),
                Instance::Bimodule(gen::random_bimodule(&cfg).unwrap()),
                Instance::BimoduleDatum(gen::random_bimodule_datum(&cfg).unwrap()),
            ];
            for inst in insts {
                let s = inst.to_json();
                let back = Instance::parse(&s).unwrap();
                assert_eq!(back, inst);
                assert_eq!(back.to_json(), s);
            }
        }
    }

    #[test]
    fn spec_schema_parses() {
        let text = r#"{"algebra":{"blocks":[2,1,3]},"cover":{"sets":[[0,1],[1,2]]},"module":{"mult":[1,2,2]}}"#;
        let Instance::Module(m) = Instance::parse(text).unwrap() else { panic!() };
        assert_eq!(m.module.mult(), &[1, 2, 2]);
        let d = r#"{"algebra":{"blocks":[1]},"cover":{"sets":[[0],[0]]},"modules":[{"mult":[1]},{"mult":[1]}],
            "zeta":[{"i":0,"j":1,"k":0,"matrix":[[[0.0,1.0]]]}]}"#;
        let Instance::Gluing(g) = Instance::parse(d).unwrap() else { panic!() };
        assert_eq!(g.zeta(1, 0, 0).unwrap()[(0, 0)], C64::new(0.0, -1.0));
    }

    #[test]
    fn malformed_inputs_are_classified() {
        assert!(matches!(Instance::parse("{"), Err(Error::Parse(_))));
        assert!(matches!(Instance::parse(r#"{"foo":1}"#), Err(Error::Parse(_))));
        let bad = r#"{"algebra":{"blocks":[2]},"cover":{"sets":[[0]]},"module":{"mult":[1,1]}}"#;
        assert!(matches!(Instance::parse(bad), Err(Error::InvalidInput(_))));
        let wrong_shape = r#"{"algebra":{"blocks":[1]},"cover":{"sets":[[0],[0]]},"modules":[{"mult":[1]},{"mult":[1]}],
            "zeta":[{"i":0,"j":1,"k":0,"matrix":[[[1.0,0.0],[0.0,0.0]]]}]}"#;
        assert!(matches!(Instance::parse(wrong_shape), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn report_pass_matches_residual() {
        let r = Report::numeric("x", 2e-9, 1e-9, "fp");
        assert!(!r.pass);
        let r = Report::numeric("x", f64::NAN, 1e-9, "fp");
        assert!(!r.pass && r.max_residual.is_none());
        let line = Report::exact("d", 3, 3, "fp").to_line();
        let back: Report = serde_json::from_str(&line).unwrap();
        assert!(back.pass && back.tol == 0.0);
    }

    #[test]
    fn suite_trial_is_deterministic() {
        let a = suite_trial(3, 1e-9);
        assert_eq!(a, suite_trial(3, 1e-9));
        assert!(a.iter().any(|r| r.check == "oracle.triple"));
    }
}
