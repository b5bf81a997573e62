//! Acceptance battery. Each test prints one `PASS`/`FAIL` line for its
//! criterion and then asserts it, so a failing criterion also fails
//! `cargo test`.

use std::time::Instant;

use rayon::prelude::*;

use modglue::cstar::{ClosedCover, FdCStarAlgebra};
use modglue::gen::{self, GenConfig, SplitMix64, TwistMode};
use modglue::glue::{self, GluingDatum};
use modglue::hmod::HilbertModule;
use modglue::morita::{self, BimoduleGluingDatum, EquivalenceBimodule};
use modglue::numlin::{CMatrix, C64, ONE};
use modglue::tensor::{self, TensorModel};
use modglue::toolkit;

const SEEDS: u64 = 200;

fn cfg(seed: u64, mode: TwistMode) -> GenConfig {
    GenConfig {
        twist_mode: mode,
        ..GenConfig::with_seed(seed)
    }
}

fn prescribed() -> TwistMode {
    TwistMode::PrescribedPhases(vec![ONE, ONE, -ONE])
}

fn verdict(n: u32, ok: bool, what: &str) {
    println!("criterion {n:>2}: {} {what}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} failed: {what}");
}

/// Largest value and how many exceed `tol`.
fn worst(values: impl IntoIterator<Item = f64>, tol: f64) -> (f64, usize) {
    values.into_iter().fold((0.0, 0), |(w, bad), v| {
        let v = if v.is_nan() { f64::INFINITY } else { v };
        (w.max(v), bad + usize::from(v > tol))
    })
}

fn phases_datum(p: [f64; 3]) -> GluingDatum {
    let a = FdCStarAlgebra::new(vec![1]).unwrap();
    let cover = ClosedCover::new(1, vec![vec![0], vec![0], vec![0]]).unwrap();
    let x = HilbertModule::new(a, vec![1]).unwrap();
    let mut d = glue::pull_apart(&x, &cover).unwrap();
    for ((i, j), v) in [(0, 1), (1, 2), (0, 2)].into_iter().zip(p) {
        d.set_zeta(i, j, 0, CMatrix::identity(1).scale_real(v)).unwrap();
    }
    d
}

fn phases_bimodule_datum(p: [C64; 3]) -> BimoduleGluingDatum {
    let a = FdCStarAlgebra::new(vec![1]).unwrap();
    let cover = ClosedCover::new(1, vec![vec![0], vec![0], vec![0]]).unwrap();
    let mut d = morita::pull_apart_bimodule(&EquivalenceBimodule::identity(&a), &cover).unwrap();
    for ((i, j), v) in [(0, 1), (1, 2), (0, 2)].into_iter().zip(p) {
        d.set_nu(i, j, 0, CMatrix::identity(1).scale(v)).unwrap();
    }
    d
}

#[test]
fn criterion_01_phi_round_trip() {
    let tol = 1e-9;
    let t0 = Instant::now();
    let res: Vec<(f64, f64)> = (0..SEEDS)
        .into_par_iter()
        .map(|seed| {
            let m = gen::random_module_instance(&cfg(seed, TwistMode::Coherent)).unwrap();
            let r = toolkit::check_phi(&m, tol, seed, "").unwrap();
            let get = |name: &str| r.iter().find(|x| x.check == name).and_then(|x| x.max_residual).unwrap_or(f64::INFINITY);
            (get("roundtrip.phi.unitary"), get("roundtrip.phi.natural"))
        })
        .collect();
    let secs = t0.elapsed().as_secs_f64();
    let (u, ub) = worst(res.iter().map(|r| r.0), tol);
    let (n, nb) = worst(res.iter().map(|r| r.1), tol);
    verdict(
        1,
        ub == 0 && nb == 0 && secs <= 30.0,
        &format!("phi unitary worst {u:.2e}, natural worst {n:.2e}, {} instances in {secs:.1}s", res.len()),
    );
}

#[test]
fn criterion_02_epsilon_round_trip() {
    let tol = 1e-9;
    let res: Vec<f64> = (0..SEEDS)
        .into_par_iter()
        .map(|seed| {
            let d = gen::random_gluing_datum(&cfg(seed, TwistMode::Coherent)).unwrap();
            glue::epsilon_iso(&d, tol).map_or(f64::INFINITY, |e| e.unitary_residual.max(e.intertwining_residual))
        })
        .collect();
    let (w, bad) = worst(res, tol);
    verdict(2, bad == 0, &format!("epsilon unitary and intertwining worst {w:.2e}, {bad} over tol"));
}

#[test]
fn criterion_03_delta() {
    let tol = 1e-9;
    let res: Vec<f64> = (0..SEEDS)
        .into_par_iter()
        .map(|seed| {
            let d = gen::random_gluing_datum(&cfg(seed, TwistMode::Coherent)).unwrap();
            glue::delta_check(&d, seed, 4).map_or(f64::INFINITY, |r| r.max_residual())
        })
        .collect();
    let (w, bad) = worst(res, tol);
    verdict(3, bad == 0, &format!("delta linearity and level 1/2 isometry worst {w:.2e}, {bad} over tol"));
}

#[test]
fn criterion_04_descent_identities() {
    let modes = [
        ("coherent", TwistMode::Coherent),
        ("twisted", TwistMode::RandomUnitary),
        ("prescribed", prescribed()),
    ];
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, mode) in &modes {
        let reps: Vec<_> = (0..SEEDS)
            .into_par_iter()
            .map(|seed| {
                let d = gen::random_gluing_datum(&cfg(seed, mode.clone())).unwrap();
                glue::descent_identities_check(&d, 1e-9, seed, 8).unwrap()
            })
            .collect();
        let (a, ab) = worst(reps.iter().map(|r| r.epsilon_delta), 1e-12);
        let (b, bb) = worst(reps.iter().map(|r| r.coassociativity), 1e-12);
        let (c, cb) = worst(
            reps.iter()
                .map(|r| if r.glue_dim == r.kernel_dim { r.kernel_distance } else { f64::INFINITY }),
            1e-9,
        );
        ok &= ab == 0 && bb == 0 && cb == 0;
        lines.push(format!(
            "{name}: (a) {a:.1e} [{ab} bad] (b) {b:.1e} [{bb} bad] (c) {c:.1e} [{cb} bad]"
        ));
    }
    verdict(4, ok, &lines.join("; "));
}

#[test]
fn criterion_05_kernels() {
    let tol = 1e-9;
    let mut data: Vec<GluingDatum> = (0..50)
        .flat_map(|seed| {
            [TwistMode::Coherent, TwistMode::RandomUnitary]
                .map(|m| gen::random_gluing_datum(&cfg(seed, m)).unwrap())
        })
        .collect();
    data.truncate(99);
    data.push(phases_datum([1.0, 1.0, -1.0]));
    let reps: Vec<_> = data
        .par_iter()
        .enumerate()
        .map(|(i, d)| glue::descent_identities_check(d, tol, i as u64, 1).unwrap())
        .collect();
    let dim_bad = reps.iter().filter(|r| r.glued_tensor_dim != r.tensor_kernel_dim).count();
    let (w, bad) = worst(reps.iter().map(|r| r.tensor_kernel_distance), tol);
    verdict(
        5,
        dim_bad == 0 && bad == 0,
        &format!("{} instances, {dim_bad} dimension mismatches, subspace worst {w:.2e}", reps.len()),
    );
}

#[test]
fn criterion_06_eta_and_phi_images() {
    let tol = 1e-9;
    let reps: Vec<_> = (0..SEEDS)
        .into_par_iter()
        .map(|seed| {
            let m = gen::random_module_instance(&cfg(seed, TwistMode::Coherent)).unwrap();
            glue::eta_image_check(&m.module, &m.cover, tol).unwrap()
        })
        .collect();
    let failing = reps.iter().filter(|r| !r.passes(tol)).count();
    let (w, _) = worst(reps.iter().map(|r| r.eta_distance.max(r.phi_distance)), tol);
    verdict(6, failing == 0, &format!("eta and phi images worst {w:.2e}, {failing} failing"));
}

#[test]
fn criterion_07_degeneracy_witness() {
    let g = glue::glue(&phases_datum([1.0, 1.0, -1.0]), 1e-10).unwrap();
    let dim = g.module().dim();
    let f = morita::obstruction_2cocycle(&phases_bimodule_datum([ONE, ONE, -ONE]), 1e-12).unwrap();
    let z = f.get(0, 1, 2, 0).unwrap();
    verdict(
        7,
        dim == 0 && (z + ONE).norm() <= 1e-12,
        &format!("glued dimension {dim}, obstruction {:.3}{:+.1e}i", z.re, z.im),
    );
}

#[test]
fn criterion_08_morita() {
    let tol = 1e-9;
    let res: Vec<(f64, f64)> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let c = cfg(seed, TwistMode::Coherent);
            // glue ∘ pull_apart on a random bimodule.
            let m = gen::random_bimodule(&c).unwrap();
            let mut rng = SplitMix64::new(seed ^ 0xc0);
            let cover = gen::random_cover(&mut rng, &c, m.right().num_blocks(), 1);
            let d = morita::pull_apart_bimodule(&m, &cover).unwrap();
            let g = morita::glue_bimodules(&d, tol).unwrap();
            let forward = morita::bimodules_isomorphic(&g.bimodule, &m, f64::INFINITY).map_or(f64::INFINITY, |w| w.residual);
            // pull_apart ∘ glue on a random coherent datum.
            let d = gen::random_bimodule_datum(&c).unwrap();
            let g = morita::glue_bimodules(&d, tol).unwrap();
            let back = morita::pull_apart_bimodule(&g.bimodule, d.cover()).unwrap();
            let backward = morita::gluing_data_isomorphic(&back, &d, f64::INFINITY).map_or(f64::INFINITY, |w| w.residual);
            (forward, backward)
        })
        .collect();
    let (f, fb) = worst(res.iter().map(|r| r.0), tol);
    let (b, bb) = worst(res.iter().map(|r| r.1), tol);
    verdict(
        8,
        fb == 0 && bb == 0,
        &format!("glue after pull-apart worst {f:.2e}, pull-apart after glue worst {b:.2e}"),
    );
}

#[test]
fn criterion_09_picard() {
    let tol = 1e-10;
    let picard_cfg = |seed| GenConfig {
        max_blocks: 3,
        max_block_dim: 3,
        max_cover_sets: 3,
        ..cfg(seed, TwistMode::RandomUnitary)
    };
    let res: Vec<(f64, bool, bool, bool)> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let d = gen::random_bimodule_datum(&picard_cfg(seed)).unwrap();
            let a1 = d.left().clone();
            let mut rng = SplitMix64::new(seed ^ 0xff);
            let coherent = TwistMode::Coherent;
            let m = gen::random_bimodule_datum_on(&mut rng, &coherent, &a1, &a1, d.cover()).unwrap();
            let m2 = gen::random_bimodule_datum_on(&mut rng, &coherent, &a1, &a1, d.cover()).unwrap();
            let out = morita::picard_conjugate(&d, &m, tol).unwrap();
            let cocycle = glue::validate_gluing_datum(out.datum(), tol).unwrap().cocycle_residual;
            let mm2 = morita::tensor_bimodule_data(&m, &m2, tol).unwrap();
            let lhs = morita::picard_conjugate(&d, &mm2, tol).unwrap();
            let rhs = morita::tensor_bimodule_data(&out, &morita::picard_conjugate(&d, &m2, tol).unwrap(), tol).unwrap();
            let tensor_ok = morita::gluing_data_isomorphic(&lhs, &rhs, 1e-9).is_some();
            let dual = morita::dual_bimodule_datum(&d, tol).unwrap();
            let back = morita::picard_conjugate(&dual, &out, tol).unwrap();
            let inverse_ok = morita::gluing_data_isomorphic(&back, &m, 1e-9).is_some();
            let nontrivial = morita::obstruction_2cocycle(&d, tol).unwrap().max_deviation() > 1e-3;
            (cocycle, tensor_ok, inverse_ok, nontrivial)
        })
        .collect();
    let (c, cb) = worst(res.iter().map(|r| r.0), tol);
    let tensor_bad = res.iter().filter(|r| !r.1).count();
    let inverse_bad = res.iter().filter(|r| !r.2).count();
    let twisted = res.iter().filter(|r| r.3).count();

    // The (1, 1, −1) datum has f = −1 and must still conjugate to a cocycle.
    let d = phases_bimodule_datum([ONE, ONE, -ONE]);
    let m = morita::pull_apart_bimodule(&EquivalenceBimodule::identity(d.left()), d.cover()).unwrap();
    let out = morita::picard_conjugate(&d, &m, tol).unwrap();
    let phase_cocycle = glue::validate_gluing_datum(out.datum(), tol).unwrap().cocycle_residual;

    let self_bad = (0..100u64)
        .filter(|&seed| {
            let mut rng = SplitMix64::new(seed);
            let a = gen::random_algebra(&mut rng, &GenConfig::with_seed(seed));
            let e = gen::random_twisted(&mut rng, &a, &a);
            morita::bimodules_isomorphic(&e, &EquivalenceBimodule::identity(&a), 1e-9).is_none()
        })
        .count();
    verdict(
        9,
        cb == 0 && phase_cocycle <= tol && tensor_bad == 0 && inverse_bad == 0 && twisted > 0 && self_bad == 0,
        &format!(
            "cocycle worst {c:.1e} ({twisted} with nontrivial f), phases datum {phase_cocycle:.1e}, \
             tensor failures {tensor_bad}, inverse failures {inverse_bad}, self-equivalences without witness {self_bad}"
        ),
    );
}

#[test]
fn criterion_10_oracle() {
    let tol = 1e-9;
    let res: Vec<Option<(f64, bool)>> = (0..SEEDS)
        .into_par_iter()
        .flat_map_iter(|seed| {
            let d = gen::random_gluing_datum(&toolkit::oracle_config(seed)).unwrap();
            [2usize, 3].map(|arity| {
                let model = TensorModel::new(d.modules(), arity).unwrap();
                (model.dim() <= 200).then(|| {
                    let ag = tensor::model_oracle(&model).unwrap().check().unwrap();
                    (ag.max_residual(), ag.dims_match())
                })
            })
        })
        .collect();
    let checked: Vec<_> = res.into_iter().flatten().collect();
    let dim_bad = checked.iter().filter(|r| !r.1).count();
    let (w, bad) = worst(checked.iter().map(|r| r.0), tol);
    verdict(
        10,
        dim_bad == 0 && bad == 0 && !checked.is_empty(),
        &format!("{} pair/triple models, {dim_bad} dimension mismatches, intertwiner worst {w:.2e}", checked.len()),
    );
}

#[test]
fn criterion_11_cech_identity() {
    let tol = 1e-10;
    let data: Vec<_> = (0..400u64)
        .filter_map(|seed| {
            let d = gen::random_bimodule_datum(&cfg(seed, TwistMode::RandomUnitary)).unwrap();
            (d.cover().len() == 4).then_some((seed, d))
        })
        .take(100)
        .collect();
    let res: Vec<(f64, f64)> = data
        .par_iter()
        .map(|(seed, d)| {
            let f = morita::obstruction_2cocycle(d, tol).unwrap();
            let mut rng = SplitMix64::new(*seed);
            let g: Vec<Vec<C64>> = (0..4).map(|_| gen::random_phases(&mut rng, d.right().num_blocks())).collect();
            let f2 = morita::obstruction_2cocycle(&morita::twist_by_coboundary(d, &g).unwrap(), tol).unwrap();
            let shift = f.values.iter().map(|(k, v)| (v - f2.values[k]).norm()).fold(0.0, f64::max);
            (f.coboundary_residual(d.cover()), shift)
        })
        .collect();
    let (c, cb) = worst(res.iter().map(|r| r.0), tol);
    let (s, sb) = worst(res.iter().map(|r| r.1), tol);
    verdict(
        11,
        cb == 0 && sb == 0 && !res.is_empty(),
        &format!("{} four-set covers, coboundary identity worst {c:.1e}, twist invariance worst {s:.1e}", res.len()),
    );
}
