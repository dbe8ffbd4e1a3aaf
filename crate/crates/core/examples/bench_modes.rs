//! Per-epoch training time in default and block-sparse mode for an all-pairs
//! model (minimum over interleaved repetitions).
use std::time::{Duration, Instant};

use sian::nn::{Samples, TaskHead, TrainConfig};
use sian::sian::Trainer;
use sian::{GamArchitecture, InteractionSet, Matrix, Mode, Rng, SianModel};

fn main() {
    let d = 15;
    let family: Vec<InteractionSet> = (0..d)
        .flat_map(|i| (i + 1..d).map(move |j| InteractionSet::new(vec![i, j]).unwrap()))
        .collect();
    let arch = GamArchitecture::new(d, family, vec![16, 12, 8], TaskHead::regression()).unwrap();
    let mut rng = Rng::new(0);
    let model = SianModel::build(arch, &mut rng).unwrap();
    let n = 4096;
    let x = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.normal()).collect()).unwrap();
    let y: Vec<f64> = (0..n).map(|r| x.get(r, 0) * x.get(r, 1)).collect();
    let data = Samples::new(&x, &y).unwrap();
    let cfg = TrainConfig::default();
    let reps: usize = std::env::var("REPS").ok().and_then(|v| v.parse().ok()).unwrap_or(5);
    let mut best = [Duration::MAX; 2];
    for _ in 0..reps {
        for (i, mode) in [Mode::Default, Mode::BlockSparse].into_iter().enumerate() {
            let mut m = model.convert(mode);
            let mut t = Trainer::new(&m, &cfg).unwrap();
            let mut r = Rng::new(1);
            let start = Instant::now();
            t.epoch(&mut m, data, &mut r).unwrap();
            best[i] = best[i].min(start.elapsed());
        }
    }
    println!(
        "default {:?}  block_sparse {:?}  ratio {:.2}",
        best[0],
        best[1],
        best[0].as_secs_f64() / best[1].as_secs_f64()
    );
}
