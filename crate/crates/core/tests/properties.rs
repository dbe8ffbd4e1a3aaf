mod common;

use proptest::prelude::*;
use sian::data::{auroc, SplitPlan};
use sian::tensor::{block_forward, from_csr, to_csr};
use sian::{BlockDiagMatrix, InteractionSet, Matrix, Mode, Rng, SianModel};

fn block_diag(seed: u64, blocks: usize) -> BlockDiagMatrix {
    let mut rng = Rng::new(seed);
    let parts = (0..blocks)
        .map(|_| {
            let (r, c) = (1 + rng.below(4), 1 + rng.below(4));
            let data = (0..r * c)
                .map(|_| if rng.below(5) == 0 { 0.0 } else { rng.normal() })
                .collect();
            Matrix::from_vec(r, c, data).unwrap()
        })
        .collect();
    BlockDiagMatrix::new(parts).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn block_product_matches_dense(seed in any::<u64>(), blocks in 1usize..6, n in 1usize..5) {
        let w = block_diag(seed, blocks);
        let mut rng = Rng::new(seed ^ 1);
        let x = Matrix::from_vec(n, w.rows(), (0..n * w.rows()).map(|_| rng.normal()).collect()).unwrap();
        let fast = block_forward(&w, &x).unwrap();
        let dense = x.matmul(&w.to_dense()).unwrap();
        for (a, b) in fast.data().iter().zip(dense.data()) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn csr_round_trip(seed in any::<u64>(), blocks in 1usize..6) {
        let w = block_diag(seed, blocks);
        let back = from_csr(&to_csr(&w), w.row_offsets(), w.col_offsets()).unwrap();
        prop_assert_eq!(back.to_dense(), w.to_dense());
    }

    #[test]
    fn modes_agree_and_serialize(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let d = 2 + rng.below(5);
        let model = SianModel::build(common::random_arch(&mut rng, d, 6), &mut rng).unwrap();
        let x = Matrix::from_vec(7, d, (0..7 * d).map(|_| rng.normal()).collect()).unwrap();
        let reference = model.forward(&x).unwrap();
        for mode in [Mode::BlockSparse, Mode::Compressed] {
            let m = model.convert(mode);
            prop_assert_eq!(&m.forward(&x).unwrap(), &reference);
            let back = SianModel::from_json(&m.to_json().unwrap()).unwrap();
            prop_assert_eq!(back.mode(), mode);
            prop_assert_eq!(&back.forward(&x).unwrap(), &reference);
        }
    }

    #[test]
    fn interaction_sets_round_trip(mut v in proptest::collection::btree_set(0usize..40, 1..6)) {
        let idx: Vec<usize> = std::mem::take(&mut v).into_iter().collect();
        let s = InteractionSet::new(idx.clone()).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        prop_assert_eq!(serde_json::from_str::<InteractionSet>(&text).unwrap(), s.clone());
        prop_assert_eq!(s.immediate_subsets().len(), if idx.len() > 1 { idx.len() } else { 0 });
    }

    #[test]
    fn auroc_rank_invariance(seed in any::<u64>(), n in 4usize..60) {
        let mut rng = Rng::new(seed);
        let scores: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mut labels: Vec<f64> = (0..n).map(|_| rng.below(2) as f64).collect();
        labels[0] = 0.0;
        labels[1] = 1.0;
        let a = auroc(&scores, &labels).unwrap();
        let squashed: Vec<f64> = scores.iter().map(|s| 3.0 * s.tanh() + 1.0).collect();
        prop_assert_eq!(auroc(&squashed, &labels).unwrap(), a);
        let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((auroc(&flipped, &labels).unwrap() + a - 1.0).abs() < 1e-12);
    }

    #[test]
    fn splits_are_deterministic_partitions(seed in any::<u64>(), n in 10usize..400) {
        let plan = SplitPlan::new(seed);
        let s = plan.split(n).unwrap();
        prop_assert_eq!(&plan.split(n).unwrap(), &s);
        let mut all: Vec<usize> = s.test.iter().chain(s.folds.iter().flatten()).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }
}
