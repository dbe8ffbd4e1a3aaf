use sian::data::{Dataset, SplitPlan, Standardizer};
use sian::nn::{Task, TaskHead, TrainConfig};
use sian::sian::train_sian;
use sian::{GamArchitecture, InteractionSet, Matrix, Rng, SianModel};

fn main() {
    let epochs: usize = std::env::var("EPOCHS").ok().and_then(|v| v.parse().ok()).unwrap_or(100);
    let lr: f64 = std::env::var("LR").ok().and_then(|v| v.parse().ok()).unwrap_or(5e-3);
    for seed in 0..5u64 {
        let mut rng = Rng::new(seed);
        let n = 10_000;
        let d = 4;
        let x: Vec<f64> = (0..n * d).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let y: Vec<f64> = x
            .chunks(d)
            .map(|r| r[0] + r[1] * r[2] + (3.0 * r[3]).sin())
            .map(|v| v + 0.1 * rng.normal())
            .collect();
        let ds = Dataset::new(
            (0..d).map(|i| format!("x{i}")).collect(),
            Matrix::from_vec(n, d, x).unwrap(),
            y,
            Task::Regression,
        )
        .unwrap();
        let split = SplitPlan::new(seed).split(n).unwrap();
        let (tr, va) = split.fold(0);
        let st = Standardizer::fit(&ds.select(&tr)).unwrap();
        let (train, val, test) = (
            st.transform(&ds.select(&tr)).unwrap(),
            st.transform(&ds.select(&va)).unwrap(),
            st.transform(&ds.select(&split.test)).unwrap(),
        );
        let floor = 0.01 / st.target.unwrap().1.powi(2);
        let mut out = vec![];
        for k in [1usize, 2] {
            let mut fam: Vec<InteractionSet> = (0..d).map(InteractionSet::singleton).collect();
            if k == 2 {
                for i in 0..d {
                    for j in i + 1..d {
                        fam.push(InteractionSet::new(vec![i, j]).unwrap());
                    }
                }
            }
            let arch = GamArchitecture::new(d, fam, vec![16, 12, 8], TaskHead::regression()).unwrap();
            let model = SianModel::build(arch, &mut Rng::new(seed + 100)).unwrap();
            let cfg = TrainConfig {
                max_epochs: epochs,
                learning_rate: lr,
                patience: Some(20),
                seed,
                ..TrainConfig::default()
            };
            let t = std::time::Instant::now();
            let (m, trace) = train_sian(&model, train.samples(), Some(val.samples()), &cfg).unwrap();
            let p = m.forward(&test.x).unwrap();
            let mse = sian::data::mse(&p, &test.y).unwrap();
            out.push(format!("K{k} mse {mse:.5} epochs {} {:?}", trace.len(), t.elapsed()));
        }
        println!("seed {seed} floor {floor:.5} {}", out.join(" | "));
    }
}
