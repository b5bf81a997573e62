use proptest::prelude::*;

use modglue::gen::{self, GenConfig, SplitMix64, TwistMode};
use modglue::glue;
use modglue::morita::{self, EquivalenceBimodule};
use modglue::numlin::{self, CMatrix, C64};
use modglue::toolkit::Instance;

fn config() -> impl Strategy<Value = GenConfig> {
    (any::<u64>(), 1usize..=6, 1usize..=4, 1usize..=4, 0usize..=5).prop_map(|(seed, k, n, s, m)| GenConfig {
        seed,
        max_blocks: k,
        max_block_dim: n,
        max_cover_sets: s,
        max_mult: m,
        twist_mode: TwistMode::Coherent,
    })
}

fn twisted(cfg: GenConfig) -> GenConfig {
    GenConfig {
        twist_mode: TwistMode::RandomUnitary,
        ..cfg
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn haar_unitaries_are_unitary(seed in any::<u64>(), n in 1usize..7) {
        let u = gen::haar_unitary(&mut SplitMix64::new(seed), n);
        prop_assert!(numlin::unitarity_residual(&u).unwrap() < 1e-12);
    }

    #[test]
    fn kernel_basis_is_orthonormal_and_annihilated(seed in any::<u64>(), r in 1usize..5, m in 1usize..6, n in 1usize..7) {
        let mut rng = SplitMix64::new(seed);
        // Rank at most r by construction.
        let a = gen::random_matrix(&mut rng, m, r).matmul(&gen::random_matrix(&mut rng, r, n));
        let k = numlin::kernel_basis(&a, 1e-10).unwrap();
        prop_assert!(k.cols() >= n.saturating_sub(r));
        prop_assert!(numlin::op_norm(&a.matmul(&k)).unwrap() < 1e-9 * numlin::op_norm(&a).unwrap().max(1.0));
        prop_assert!((&k.adjoint_mul(&k) - &CMatrix::identity(k.cols())).max_abs() < 1e-10);
    }

    #[test]
    fn phi_is_unitary(cfg in config()) {
        let m = gen::random_module_instance(&cfg).unwrap();
        let phi = glue::phi_iso(&m.module, &m.cover, 1e-9).unwrap();
        prop_assert_eq!(phi.glued.module().mult(), m.module.mult());
        for b in phi.map.blocks() {
            prop_assert!(numlin::unitarity_residual(b).unwrap() < 1e-9);
        }
    }

    #[test]
    fn coherent_data_satisfy_the_cocycle(cfg in config()) {
        let d = gen::random_gluing_datum(&cfg).unwrap();
        let rep = glue::validate_gluing_datum(&d, 1e-10).unwrap();
        prop_assert!(rep.is_valid(), "{:?}", rep);
        prop_assert!(glue::epsilon_iso(&d, 1e-9).is_ok());
    }

    #[test]
    fn glued_dimension_never_exceeds_parts(cfg in config()) {
        let d = gen::random_gluing_datum(&twisted(cfg)).unwrap();
        let g = glue::glue(&d, 1e-9).unwrap();
        prop_assert!(g.constraint_residual() < 1e-9);
        prop_assert!(g.isometry_residual() < 1e-9);
        for i in 0..d.cover().len() {
            let gi = g.module().restrict(d.cover().set(i)).unwrap();
            prop_assert!(gi.dim() <= d.modules().part(i).dim());
        }
    }

    #[test]
    fn json_round_trip_is_byte_identical(cfg in config(), twist in any::<bool>()) {
        let cfg = if twist { twisted(cfg) } else { cfg };
        for inst in [
            Instance::Gluing(gen::random_gluing_datum(&cfg).unwrap()),
            Instance::BimoduleDatum(gen::random_bimodule_datum(&cfg).unwrap()),
            Instance::Module(gen::random_module_instance(&cfg).unwrap()),
        ] {
            let text = inst.to_json();
            let back = Instance::parse(&text).unwrap();
            prop_assert_eq!(back.to_json(), text);
        }
    }

    #[test]
    fn bimodule_times_dual_is_identity(cfg in config()) {
        let m = gen::random_bimodule(&cfg).unwrap();
        prop_assert!(morita::validate_bimodule(&m).unwrap().passes(1e-10));
        let t = morita::tensor_bimodules(&m, &morita::dual_bimodule(&m)).unwrap();
        prop_assert!(morita::bimodules_isomorphic(&t, &EquivalenceBimodule::identity(m.left()), 1e-9).is_some());
    }

    #[test]
    fn obstruction_ignores_coboundaries(cfg in config(), seed in any::<u64>()) {
        let d = gen::random_bimodule_datum(&twisted(cfg)).unwrap();
        let f = morita::obstruction_2cocycle(&d, 1e-10).unwrap();
        prop_assert!(f.nonscalar_residual < 1e-10);
        prop_assert!(f.coboundary_residual(d.cover()) < 1e-10);
        let mut rng = SplitMix64::new(seed);
        let g: Vec<Vec<C64>> = (0..d.cover().len())
            .map(|_| gen::random_phases(&mut rng, d.right().num_blocks()))
            .collect();
        let f2 = morita::obstruction_2cocycle(&morita::twist_by_coboundary(&d, &g).unwrap(), 1e-10).unwrap();
        for (k, v) in &f.values {
            prop_assert!((v - f2.values[k]).norm() < 1e-10);
        }
    }
}
