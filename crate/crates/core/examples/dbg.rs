use dynfield_core::grid::*;
use dynfield_core::surrogate::*;
use dynfield_core::surrogate::train::{sequence_rmse, split_holdout, train};
use std::time::Instant;

fn main() {
    let maps = dataset::generate_submaps(20, 101);
    let cfg = DatasetConfig { seed: 101, ..DatasetConfig::default() };
    let fps = [Footprint::folded_arm(), Footprint::outstretched_arm()];
    let rows = generate_dataset(&maps, &fps, PotentialWeights::default(), &cfg).unwrap();
    let (train_rows, held) = split_holdout(&rows, 0.1, 5);
    for variant in [Variant::D1, Variant::D2, Variant::D3] {
        let t = Instant::now();
        let mut model = SurrogateModel::new(variant, ModelMeta::default(), ModelDims::default(), 42);
        let tc = TrainConfig { epochs: 25, seed: 42, ..TrainConfig::default() };
        let report = train(&mut model, &train_rows, &maps, &tc).unwrap();
        let rmse = sequence_rmse(&model, &held, &maps).unwrap();
        println!("{variant}: 25 epochs {:.0}s final train loss {:.4} holdout seq RMSE {:.4} (target < 0.3142)",
            t.elapsed().as_secs_f64(), report.final_loss, rmse);
    }
}
