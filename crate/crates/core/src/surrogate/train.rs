//! Mini-batch training of the surrogates: mean-squared potential error plus
//! a weighted auxiliary map-reconstruction loss, analytic backprop, Adam.
//! D3 trains teacher-forced on the true previous potentials.

use ndarray::{s, Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::dataset::DatasetRow;
use super::net::{tanh, tanh_backward, AdamLayer, LinearGrad};
use super::{d3_context, MapInputs, SurrogateError, SurrogateModel, Variant};
use crate::grid::OccupancyGrid;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("loss became non-finite at epoch {epoch}, batch {batch} (last finite loss {last_loss})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        last_loss: f64,
    },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Weight of the auxiliary map-reconstruction loss.
    pub aux_weight: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            learning_rate: 1e-3,
            batch_size: 64,
            aux_weight: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainReport {
    /// Mean batch loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub final_loss: f64,
}

/// Row tensors ready for batching.
pub struct PreparedData {
    map_in: Array2<f64>,
    point_in: Array2<f64>,
    targets: Array2<f64>,
    pooled: Array2<f64>,
}

impl PreparedData {
    pub fn len(&self) -> usize {
        self.map_in.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Assemble network inputs for every row. Maps are indexed by the rows'
/// `submap_id`.
pub fn prepare(
    model: &SurrogateModel,
    rows: &[DatasetRow],
    maps: &[OccupancyGrid],
) -> Result<PreparedData, TrainError> {
    if rows.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let meta = &model.meta;
    let n = rows.len();
    let mut map_in = Array2::zeros((n, meta.map_input_len()));
    let mut point_in = Array2::zeros((n, 4));
    let mut targets = Array2::zeros((n, meta.horizon + 1));
    let mut pooled = Array2::zeros((n, meta.pooled_len()));

    // Pooled maps and static map-inputs are shared per submap; агent fields
    // differ per row, so assemble per row from the cached pooled raster.
    let mut pooled_cache: Vec<Option<Array1<f64>>> = vec![None; maps.len()];
    for (i, row) in rows.iter().enumerate() {
        let map = maps
            .get(row.submap_id)
            .ok_or(SurrogateError::DimensionMismatch(format!(
                "row references submap {} but only {} maps were provided",
                row.submap_id,
                maps.len()
            )))?;
        if pooled_cache[row.submap_id].is_none() {
            let inputs = MapInputs::new(meta, map, &row.footprint, row.agent)?;
            pooled_cache[row.submap_id] = Some(inputs.pooled);
        }
        let inputs = MapInputs::new(meta, map, &row.footprint, row.agent)?;
        map_in.row_mut(i).assign(&inputs.vector);
        let g = map.geometry;
        point_in.row_mut(i).assign(&super::point_input(
            meta,
            (g.origin_x, g.origin_y),
            row.robot_x,
            row.robot_y,
            row.robot_theta,
        ));
        if row.targets.len() != meta.horizon + 1 {
            return Err(SurrogateError::DimensionMismatch(format!(
                "row has {} targets, model horizon needs {}",
                row.targets.len(),
                meta.horizon + 1
            ))
            .into());
        }
        for (k, &t) in row.targets.iter().enumerate() {
            targets[(i, k)] = t;
        }
        pooled
            .row_mut(i)
            .assign(pooled_cache[row.submap_id].as_ref().unwrap());
    }
    Ok(PreparedData {
        map_in,
        point_in,
        targets,
        pooled,
    })
}

pub(crate) struct ModelGrads {
    pub layers: Vec<LinearGrad>,
}

impl ModelGrads {
    fn new(model: &SurrogateModel) -> Self {
        Self {
            layers: model.layers().iter().map(|l| l.zero_grad()).collect(),
        }
    }

    #[cfg(test)]
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.layers {
            out.extend(g.w.iter());
            out.extend(g.b.iter());
        }
        out
    }
}

/// Forward + backward over one batch; returns the loss and parameter grads.
///
/// Loss = mean squared potential error over predicted outputs
///      + aux_weight * mean squared pooled-map reconstruction error.
pub(crate) fn batch_loss_grads(
    model: &SurrogateModel,
    data: &PreparedData,
    batch: &[usize],
    aux_weight: f64,
) -> (f64, ModelGrads) {
    let b = batch.len();
    let meta = &model.meta;
    let select = |a: &Array2<f64>| -> Array2<f64> {
        let mut out = Array2::zeros((b, a.ncols()));
        for (i, &idx) in batch.iter().enumerate() {
            out.row_mut(i).assign(&a.row(idx));
        }
        out
    };
    let m = select(&data.map_in);
    let p = select(&data.point_in);
    let t = select(&data.targets);
    let pooled = select(&data.pooled);

    // Forward.
    let h1 = tanh(&model.map_l1.forward(&m));
    let hm = tanh(&model.map_l2.forward(&h1));
    let hp = tanh(&model.point_l1.forward(&p));
    let e_map = hm.ncols();
    let mut cat = Array2::zeros((b, e_map + hp.ncols()));
    cat.slice_mut(s![.., ..e_map]).assign(&hm);
    cat.slice_mut(s![.., e_map..]).assign(&hp);
    let he = tanh(&model.emb.forward(&cat));

    // Heads per variant; record (head_idx, input, hidden, pred, target_col).
    struct HeadPass {
        head: usize,
        input: Array2<f64>,
        hidden: Array2<f64>,
        pred: Array2<f64>,
        target_col: usize,
    }
    let mut passes: Vec<HeadPass> = Vec::new();
    match model.variant {
        Variant::D1 => {
            let hidden = tanh(&model.heads[0].0.forward(&he));
            let pred = model.heads[0].1.forward(&hidden);
            passes.push(HeadPass {
                head: 0,
                input: he.clone(),
                hidden,
                pred,
                target_col: 0,
            });
        }
        Variant::D2 => {
            for k in 0..=meta.horizon {
                let hidden = tanh(&model.heads[k].0.forward(&he));
                let pred = model.heads[k].1.forward(&hidden);
                passes.push(HeadPass {
                    head: k,
                    input: he.clone(),
                    hidden,
                    pred,
                    target_col: k,
                });
            }
        }
        Variant::D3 => {
            let ctx_len = meta.d3_context_len();
            for k in 0..=meta.horizon {
                let mut input = Array2::zeros((b, he.ncols() + ctx_len));
                input.slice_mut(s![.., ..he.ncols()]).assign(&he);
                for (i, &idx) in batch.iter().enumerate() {
                    let row_targets: Vec<f64> =
                        (0..k).map(|j| data.targets[(idx, j)]).collect();
                    let ctx = d3_context(meta.horizon, k, &row_targets);
                    input
                        .slice_mut(s![i, he.ncols()..])
                        .assign(&ctx);
                }
                let hidden = tanh(&model.heads[0].0.forward(&input));
                let pred = model.heads[0].1.forward(&hidden);
                passes.push(HeadPass {
                    head: 0,
                    input,
                    hidden,
                    pred,
                    target_col: k,
                });
            }
        }
    }

    // Auxiliary reconstruction from h_map.
    let ah = tanh(&model.aux_l1.forward(&hm));
    let recon = model.aux_l2.forward(&ah);

    // Losses.
    let n_outputs = passes.len();
    let mut pred_loss = 0.0;
    for pass in &passes {
        for (i, _) in batch.iter().enumerate() {
            let d = pass.pred[(i, 0)] - t[(i, pass.target_col)];
            pred_loss += d * d;
        }
    }
    pred_loss /= (b * n_outputs) as f64;
    let aux_diff = &recon - &pooled;
    let aux_loss = aux_diff.mapv(|d| d * d).sum() / (b * meta.pooled_len()) as f64;
    let loss = pred_loss + aux_weight * aux_loss;

    // Backward. Layer order: map_l1, map_l2, point_l1, emb, heads.., aux_l1, aux_l2.
    let mut grads = ModelGrads::new(model);
    let head_grad_base = 4;
    let mut d_he = Array2::zeros(he.raw_dim());
    for pass in &passes {
        let mut d_pred = Array2::zeros(pass.pred.raw_dim());
        for (i, _) in batch.iter().enumerate() {
            d_pred[(i, 0)] =
                2.0 * (pass.pred[(i, 0)] - t[(i, pass.target_col)]) / (b * n_outputs) as f64;
        }
        let (g1, g2) = {
            let gi = head_grad_base + 2 * pass.head;
            // Split-borrow the two gradient slots for this head.
            let (left, right) = grads.layers.split_at_mut(gi + 1);
            (&mut left[gi], &mut right[0])
        };
        let d_hidden = model.heads[pass.head].1.backward(&pass.hidden, &d_pred, g2);
        let d_pre = tanh_backward(&pass.hidden, &d_hidden);
        let d_input = model.heads[pass.head].0.backward(&pass.input, &d_pre, g1);
        d_he += &d_input.slice(s![.., ..he.ncols()]);
        // Context gradients stop here: teacher-forced targets are constants.
    }

    let aux_layers = grads.layers.len() - 2;
    let mut d_recon = aux_diff;
    d_recon.mapv_inplace(|d| 2.0 * aux_weight * d / (b * meta.pooled_len()) as f64);
    let d_ah = model.aux_l2.backward(&ah, &d_recon, &mut grads.layers[aux_layers + 1]);
    let d_ah_pre = tanh_backward(&ah, &d_ah);
    let d_hm_aux = model.aux_l1.backward(&hm, &d_ah_pre, &mut grads.layers[aux_layers]);

    let d_he_pre = tanh_backward(&he, &d_he);
    let d_cat = model.emb.backward(&cat, &d_he_pre, &mut grads.layers[3]);
    let d_hm = &d_cat.slice(s![.., ..e_map]) + &d_hm_aux;
    let d_hp = d_cat.slice(s![.., e_map..]).to_owned();

    let d_hp_pre = tanh_backward(&hp, &d_hp);
    model.point_l1.backward(&p, &d_hp_pre, &mut grads.layers[2]);

    let d_hm_pre = tanh_backward(&hm, &d_hm);
    let d_h1 = model.map_l2.backward(&h1, &d_hm_pre, &mut grads.layers[1]);
    let d_h1_pre = tanh_backward(&h1, &d_h1);
    model.map_l1.backward(&m, &d_h1_pre, &mut grads.layers[0]);

    (loss, grads)
}

/// Train in place; returns the per-epoch loss curve.
pub fn train(
    model: &mut SurrogateModel,
    rows: &[DatasetRow],
    maps: &[OccupancyGrid],
    cfg: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    let data = prepare(model, rows, maps)?;
    train_prepared(model, &data, cfg)
}

pub fn train_prepared(
    model: &mut SurrogateModel,
    data: &PreparedData,
    cfg: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut adam: Vec<AdamLayer> = model.layers().iter().map(|l| AdamLayer::new(l)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut indices: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;
    let mut last_finite = f64::NAN;

    for epoch in 0..cfg.epochs {
        indices.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (batch_idx, batch) in indices.chunks(cfg.batch_size.max(1)).enumerate() {
            let (loss, grads) = batch_loss_grads(model, data, batch, cfg.aux_weight);
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                    last_loss: last_finite,
                });
            }
            last_finite = loss;
            step += 1;
            for ((layer, state), grad) in model
                .layers_mut()
                .into_iter()
                .zip(adam.iter_mut())
                .zip(grads.layers.iter())
            {
                state.update(layer, grad, cfg.learning_rate, step);
            }
            epoch_loss += loss;
            batches += 1;
        }
        epoch_losses.push(epoch_loss / batches as f64);
    }
    let final_loss = *epoch_losses.last().unwrap_or(&f64::NAN);
    Ok(TrainReport {
        epoch_losses,
        final_loss,
    })
}

/// Held-out sequence RMSE of a trained model over rows.
///
/// D1 predicts each step by re-encoding the agent advanced `k` steps (the
/// per-frame strategy); D2/D3 predict the sequence in one query.
pub fn sequence_rmse(
    model: &SurrogateModel,
    rows: &[DatasetRow],
    maps: &[OccupancyGrid],
) -> Result<f64, SurrogateError> {
    let meta = &model.meta;
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for row in rows {
        let map = maps
            .get(row.submap_id)
            .ok_or_else(|| SurrogateError::DimensionMismatch(format!("missing submap {}", row.submap_id)))?;
        let g = map.geometry;
        let origin = (g.origin_x, g.origin_y);
        let pose = (row.robot_x, row.robot_y, row.robot_theta);
        let preds: Vec<f64> = match model.variant {
            Variant::D1 => (0..=meta.horizon)
                .map(|k| {
                    let agent = row.agent.map(|(ax, ay, ah)| {
                        let dist = k as f64 * meta.agent_step_m;
                        (ax + dist * ah.cos(), ay + dist * ah.sin(), ah)
                    });
                    let inputs = MapInputs::new(meta, map, &row.footprint, agent)?;
                    super::forward_d1(model, &inputs, pose, origin)
                })
                .collect::<Result<_, _>>()?,
            Variant::D2 => {
                let inputs = MapInputs::new(meta, map, &row.footprint, row.agent)?;
                super::forward_d2(model, &inputs, pose, origin)?
            }
            Variant::D3 => {
                let inputs = MapInputs::new(meta, map, &row.footprint, row.agent)?;
                super::forward_d3(model, &inputs, pose, origin)?
            }
        };
        for (pred, target) in preds.iter().zip(&row.targets) {
            sum_sq += (pred - target) * (pred - target);
            count += 1;
        }
    }
    Ok((sum_sq / count as f64).sqrt())
}

/// Deterministic train/holdout split by shuffled row index.
pub fn split_holdout(rows: &[DatasetRow], holdout_fraction: f64, seed: u64) -> (Vec<DatasetRow>, Vec<DatasetRow>) {
    let mut indices: Vec<usize> = (0..rows.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let holdout = ((rows.len() as f64) * holdout_fraction).round() as usize;
    let (hold, keep) = indices.split_at(holdout.min(rows.len()));
    let mut train: Vec<DatasetRow> = keep.iter().map(|&i| rows[i].clone()).collect();
    let mut held: Vec<DatasetRow> = hold.iter().map(|&i| rows[i].clone()).collect();
    train.shrink_to_fit();
    held.shrink_to_fit();
    (train, held)
}
