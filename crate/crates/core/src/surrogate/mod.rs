//! Learned potential predictors: small dense encoder/decoder networks
//! realizing the three dynamic prediction strategies, trained from scratch
//! on data generated with the analytic grid pipeline.
//!
//! The paper-scale convolutional encoder and transformer decoder are
//! deliberately replaced by dense networks over a max-pooled map: the
//! input/output contracts, training losses, and prediction modes are kept,
//! the capacity is desk scale. Inputs to the map branch are the pooled
//! occupancy (10x10), a footprint one-hot, and the obstacle's (x, y,
//! heading); the point branch embeds the query pose. The variants differ
//! only in their heads:
//!
//! - D1: one scalar head, potential of the current frame only; dynamics are
//!   handled outside by re-encoding the obstacle pose per frame;
//! - D2: one independent scalar head per future step;
//! - D3: one scalar head applied autoregressively, conditioned on all
//!   previously predicted potentials.

use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::grid::{Extent, GridError, OccupancyGrid, PotentialWeights};
use crate::mpc::{HorizonOracleSource, MpcError};
use crate::query::{PotentialOracle, PotentialSample};
use crate::world::{propagate_obstacle, DynamicObstacle, WorldModel};

mod net;
pub mod dataset;
pub mod train;

pub use dataset::{generate_dataset, DatasetConfig, DatasetError, DatasetRow};
pub use train::{train, TrainConfig, TrainError, TrainReport};

use net::{tanh, Linear};

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("operation requires variant {expected:?}, model is {got:?}")]
    VariantMismatch { expected: Variant, got: Variant },
    #[error("input dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("unknown footprint label {0:?} for this model")]
    UnknownFootprint(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// The three dynamic-potential prediction strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Variant {
    D1,
    D2,
    D3,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::D1 => "d1",
            Variant::D2 => "d2",
            Variant::D3 => "d3",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "d1" => Some(Variant::D1),
            "d2" => Some(Variant::D2),
            "d3" => Some(Variant::D3),
            _ => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Layer widths; the defaults are the shipped desk-scale architecture.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelDims {
    pub hidden: usize,
    pub e_map: usize,
    pub e_point: usize,
    pub emb: usize,
    pub head_hidden: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            hidden: 128,
            e_map: 64,
            e_point: 32,
            emb: 64,
            head_hidden: 128,
        }
    }
}

/// Everything needed to rebuild inputs for a trained model.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelMeta {
    /// Prediction steps beyond the current frame (sequence length H+1).
    pub horizon: usize,
    pub pooled_side: usize,
    pub map_width: usize,
    pub map_height: usize,
    pub resolution: f64,
    pub footprint_labels: Vec<String>,
    pub weights: PotentialWeights,
    /// Distance the obstacle advances per prediction step (speed * dt).
    pub agent_step_m: f64,
    pub seed: u64,
}

impl Default for ModelMeta {
    fn default() -> Self {
        Self {
            horizon: 10,
            pooled_side: 10,
            map_width: 50,
            map_height: 50,
            resolution: 0.1,
            footprint_labels: vec!["folded_arm".into(), "outstretched_arm".into()],
            weights: PotentialWeights::default(),
            agent_step_m: 0.1,
            seed: 0,
        }
    }
}

impl ModelMeta {
    pub fn pooled_len(&self) -> usize {
        self.pooled_side * self.pooled_side
    }

    pub fn map_input_len(&self) -> usize {
        self.pooled_len() + self.footprint_labels.len() + 3
    }

    /// Length of the D3 causal context: previous potentials plus a step
    /// one-hot.
    pub fn d3_context_len(&self) -> usize {
        2 * self.horizon + 1
    }
}

/// Dense surrogate for the footprint-pooled repulsive potential.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    pub variant: Variant,
    pub meta: ModelMeta,
    pub dims: ModelDims,
    pub(crate) map_l1: Linear,
    pub(crate) map_l2: Linear,
    pub(crate) point_l1: Linear,
    pub(crate) emb: Linear,
    /// One (hidden, output) pair per head: D1/D3 have one, D2 horizon+1.
    pub(crate) heads: Vec<(Linear, Linear)>,
    pub(crate) aux_l1: Linear,
    pub(crate) aux_l2: Linear,
}

impl SurrogateModel {
    pub fn new(variant: Variant, meta: ModelMeta, dims: ModelDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let meta = ModelMeta { seed, ..meta };
        let head_count = match variant {
            Variant::D1 | Variant::D3 => 1,
            Variant::D2 => meta.horizon + 1,
        };
        let head_in = match variant {
            Variant::D1 | Variant::D2 => dims.emb,
            Variant::D3 => dims.emb + meta.d3_context_len(),
        };
        let heads = (0..head_count)
            .map(|_| {
                (
                    Linear::init(&mut rng, head_in, dims.head_hidden),
                    Linear::init(&mut rng, dims.head_hidden, 1),
                )
            })
            .collect();
        Self {
            variant,
            map_l1: Linear::init(&mut rng, meta.map_input_len(), dims.hidden),
            map_l2: Linear::init(&mut rng, dims.hidden, dims.e_map),
            point_l1: Linear::init(&mut rng, 4, dims.e_point),
            emb: Linear::init(&mut rng, dims.e_map + dims.e_point, dims.emb),
            heads,
            aux_l1: Linear::init(&mut rng, dims.e_map, dims.hidden),
            aux_l2: Linear::init(&mut rng, dims.hidden, meta.pooled_len()),
            meta,
            dims,
        }
    }

    fn expect_variant(&self, expected: Variant) -> Result<(), SurrogateError> {
        if self.variant == expected {
            Ok(())
        } else {
            Err(SurrogateError::VariantMismatch {
                expected,
                got: self.variant,
            })
        }
    }

    pub(crate) fn layers(&self) -> Vec<&Linear> {
        let mut out = vec![&self.map_l1, &self.map_l2, &self.point_l1, &self.emb];
        for (a, b) in &self.heads {
            out.push(a);
            out.push(b);
        }
        out.push(&self.aux_l1);
        out.push(&self.aux_l2);
        out
    }

    pub(crate) fn layers_mut(&mut self) -> Vec<&mut Linear> {
        let mut out: Vec<&mut Linear> = vec![
            &mut self.map_l1,
            &mut self.map_l2,
            &mut self.point_l1,
            &mut self.emb,
        ];
        for (a, b) in &mut self.heads {
            out.push(a);
            out.push(b);
        }
        out.push(&mut self.aux_l1);
        out.push(&mut self.aux_l2);
        out
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.param_count()).sum()
    }

    /// Parameters in canonical order (tests and checkpoints).
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in self.layers() {
            out.extend(layer.w.iter());
            out.extend(layer.b.iter());
        }
        out
    }

    pub fn unflatten_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut at = 0;
        for layer in self.layers_mut() {
            for w in layer.w.iter_mut() {
                *w = flat[at];
                at += 1;
            }
            for b in layer.b.iter_mut() {
                *b = flat[at];
                at += 1;
            }
        }
    }

    /// Map-branch embedding h_map.
    pub(crate) fn map_embedding(&self, map_in: &Array1<f64>) -> Array1<f64> {
        let m = map_in.clone().insert_axis(ndarray::Axis(0));
        let h1 = tanh(&self.map_l1.forward(&m));
        let hm = tanh(&self.map_l2.forward(&h1));
        hm.remove_axis(ndarray::Axis(0))
    }

    /// Combined embedding h_emb from a cached h_map and a raw point input.
    pub(crate) fn combined_embedding(&self, h_map: &Array1<f64>, point_in: &Array1<f64>) -> Array1<f64> {
        let p = point_in.clone().insert_axis(ndarray::Axis(0));
        let hp = tanh(&self.point_l1.forward(&p)).remove_axis(ndarray::Axis(0));
        let mut cat = Array1::zeros(h_map.len() + hp.len());
        cat.slice_mut(ndarray::s![..h_map.len()]).assign(h_map);
        cat.slice_mut(ndarray::s![h_map.len()..]).assign(&hp);
        let c = cat.insert_axis(ndarray::Axis(0));
        tanh(&self.emb.forward(&c)).remove_axis(ndarray::Axis(0))
    }

    pub(crate) fn head_eval(&self, head: usize, input: &Array1<f64>) -> f64 {
        let x = input.clone().insert_axis(ndarray::Axis(0));
        let h = tanh(&self.heads[head].0.forward(&x));
        self.heads[head].1.forward(&h)[(0, 0)]
    }

    pub(crate) fn d3_head_eval(&self, h_emb: &Array1<f64>, step: usize, prev: &[f64]) -> f64 {
        let ctx = d3_context(self.meta.horizon, step, prev);
        let mut input = Array1::zeros(h_emb.len() + ctx.len());
        input.slice_mut(ndarray::s![..h_emb.len()]).assign(h_emb);
        input.slice_mut(ndarray::s![h_emb.len()..]).assign(&ctx);
        self.head_eval(0, &input)
    }

    pub fn save_checkpoint<P: AsRef<Path>>(&self, path: P) -> Result<(), SurrogateError> {
        let mut header = String::new();
        header.push_str("dynfield-checkpoint v1\n");
        header.push_str(&format!("variant={}\n", self.variant));
        header.push_str(&format!("horizon={}\n", self.meta.horizon));
        header.push_str(&format!("pooled_side={}\n", self.meta.pooled_side));
        header.push_str(&format!("map_width={}\n", self.meta.map_width));
        header.push_str(&format!("map_height={}\n", self.meta.map_height));
        header.push_str(&format!("resolution={}\n", self.meta.resolution));
        header.push_str(&format!(
            "footprints={}\n",
            self.meta.footprint_labels.join(",")
        ));
        header.push_str(&format!("w1={}\n", self.meta.weights.w1));
        header.push_str(&format!("w2={}\n", self.meta.weights.w2));
        header.push_str(&format!("agent_step_m={}\n", self.meta.agent_step_m));
        header.push_str(&format!("seed={}\n", self.meta.seed));
        header.push_str(&format!("hidden={}\n", self.dims.hidden));
        header.push_str(&format!("e_map={}\n", self.dims.e_map));
        header.push_str(&format!("e_point={}\n", self.dims.e_point));
        header.push_str(&format!("emb={}\n", self.dims.emb));
        header.push_str(&format!("head_hidden={}\n", self.dims.head_hidden));
        header.push_str("---\n");

        let params = self.flatten_params();
        let mut bytes = header.into_bytes();
        bytes.reserve(params.len() * 8);
        for p in &params {
            bytes.extend_from_slice(&p.to_le_bytes());
        }
        fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load_checkpoint<P: AsRef<Path>>(path: P) -> Result<Self, SurrogateError> {
        let bytes = fs::read(path)?;
        let sep = b"---\n";
        let split = bytes
            .windows(sep.len())
            .position(|w| w == sep)
            .ok_or_else(|| SurrogateError::Checkpoint("missing header separator".into()))?;
        let header = std::str::from_utf8(&bytes[..split])
            .map_err(|_| SurrogateError::Checkpoint("header is not UTF-8".into()))?;
        let body = &bytes[split + sep.len()..];

        let mut lines = header.lines();
        let magic = lines.next().unwrap_or_default();
        if magic != "dynfield-checkpoint v1" {
            return Err(SurrogateError::Checkpoint(format!(
                "unsupported checkpoint format {magic:?}"
            )));
        }
        let mut kv = std::collections::HashMap::new();
        for line in lines {
            if let Some((k, v)) = line.split_once('=') {
                kv.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let get = |k: &str| -> Result<&String, SurrogateError> {
            kv.get(k)
                .ok_or_else(|| SurrogateError::Checkpoint(format!("missing key {k:?}")))
        };
        let parse_usize = |k: &str| -> Result<usize, SurrogateError> {
            get(k)?
                .parse()
                .map_err(|_| SurrogateError::Checkpoint(format!("bad {k}")))
        };
        let parse_f64 = |k: &str| -> Result<f64, SurrogateError> {
            get(k)?
                .parse()
                .map_err(|_| SurrogateError::Checkpoint(format!("bad {k}")))
        };

        let variant = Variant::parse(get("variant")?)
            .ok_or_else(|| SurrogateError::Checkpoint("bad variant".into()))?;
        let meta = ModelMeta {
            horizon: parse_usize("horizon")?,
            pooled_side: parse_usize("pooled_side")?,
            map_width: parse_usize("map_width")?,
            map_height: parse_usize("map_height")?,
            resolution: parse_f64("resolution")?,
            footprint_labels: get("footprints")?.split(',').map(str::to_string).collect(),
            weights: PotentialWeights {
                w1: parse_f64("w1")?,
                w2: parse_f64("w2")?,
            },
            agent_step_m: parse_f64("agent_step_m")?,
            seed: parse_usize("seed")? as u64,
        };
        let dims = ModelDims {
            hidden: parse_usize("hidden")?,
            e_map: parse_usize("e_map")?,
            e_point: parse_usize("e_point")?,
            emb: parse_usize("emb")?,
            head_hidden: parse_usize("head_hidden")?,
        };
        let seed = meta.seed;
        let mut model = SurrogateModel::new(variant, meta, dims, seed);
        let expected = model.param_count() * 8;
        if body.len() != expected {
            return Err(SurrogateError::Checkpoint(format!(
                "parameter payload holds {} bytes, expected {expected}",
                body.len()
            )));
        }
        let params: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        model.unflatten_params(&params);
        Ok(model)
    }
}

/// Build the D3 causal context: previous potentials zero-padded to H slots
/// plus a one-hot of the step being predicted.
pub(crate) fn d3_context(horizon: usize, step: usize, prev: &[f64]) -> Array1<f64> {
    debug_assert!(step <= horizon);
    debug_assert!(prev.len() >= step.min(horizon));
    let mut ctx = Array1::zeros(2 * horizon + 1);
    for i in 0..step.min(horizon) {
        ctx[i] = prev[i];
    }
    ctx[horizon + step] = 1.0;
    ctx
}

/// Assembled map-branch input: pooled occupancy, footprint one-hot, and the
/// normalized obstacle pose (or the absent-agent sentinel).
#[derive(Debug, Clone, PartialEq)]
pub struct MapInputs {
    pub vector: Array1<f64>,
    pub pooled: Array1<f64>,
}

impl MapInputs {
    pub fn new(
        meta: &ModelMeta,
        grid: &OccupancyGrid,
        footprint_label: &str,
        agent: Option<(f64, f64, f64)>,
    ) -> Result<Self, SurrogateError> {
        let g = grid.geometry;
        if g.width != meta.map_width || g.height != meta.map_height {
            return Err(SurrogateError::DimensionMismatch(format!(
                "grid is {}x{}, model expects {}x{}",
                g.width, g.height, meta.map_width, meta.map_height
            )));
        }
        let pooled = max_pool(grid, meta.pooled_side);
        let fp_idx = meta
            .footprint_labels
            .iter()
            .position(|l| l == footprint_label)
            .ok_or_else(|| SurrogateError::UnknownFootprint(footprint_label.to_string()))?;

        let mut vector = Array1::zeros(meta.map_input_len());
        vector.slice_mut(ndarray::s![..pooled.len()]).assign(&pooled);
        vector[pooled.len() + fp_idx] = 1.0;
        let agent_at = pooled.len() + meta.footprint_labels.len();
        match agent {
            Some((ax, ay, ah)) => {
                vector[agent_at] = (ax - g.origin_x) / (g.width as f64 * g.resolution);
                vector[agent_at + 1] = (ay - g.origin_y) / (g.height as f64 * g.resolution);
                vector[agent_at + 2] = ah.rem_euclid(std::f64::consts::TAU);
            }
            None => {
                vector[agent_at] = -1.0;
                vector[agent_at + 1] = -1.0;
                vector[agent_at + 2] = 0.0;
            }
        }
        Ok(Self { vector, pooled })
    }
}

/// Max-pool the occupancy into a pooled_side^2 block raster.
pub fn max_pool(grid: &OccupancyGrid, pooled_side: usize) -> Array1<f64> {
    let g = grid.geometry;
    let block_r = g.height.div_ceil(pooled_side);
    let block_c = g.width.div_ceil(pooled_side);
    let mut out = Array1::zeros(pooled_side * pooled_side);
    for pr in 0..pooled_side {
        for pc in 0..pooled_side {
            let mut occupied = false;
            'scan: for r in pr * block_r..((pr + 1) * block_r).min(g.height) {
                for c in pc * block_c..((pc + 1) * block_c).min(g.width) {
                    if grid.is_occupied(r, c) {
                        occupied = true;
                        break 'scan;
                    }
                }
            }
            out[pr * pooled_side + pc] = occupied as u8 as f64;
        }
    }
    out
}

/// Normalized point-branch input for a query pose.
pub(crate) fn point_input(meta: &ModelMeta, grid_origin: (f64, f64), x: f64, y: f64, theta: f64) -> Array1<f64> {
    let w = meta.map_width as f64 * meta.resolution;
    let h = meta.map_height as f64 * meta.resolution;
    let (s, c) = theta.sin_cos();
    ndarray::array![(x - grid_origin.0) / w, (y - grid_origin.1) / h, s, c]
}

/// Predicted potential of the current frame (variant D1).
pub fn forward_d1(
    model: &SurrogateModel,
    inputs: &MapInputs,
    pose: (f64, f64, f64),
    origin: (f64, f64),
) -> Result<f64, SurrogateError> {
    model.expect_variant(Variant::D1)?;
    let h_map = model.map_embedding(&inputs.vector);
    let p = point_input(&model.meta, origin, pose.0, pose.1, pose.2);
    let h_emb = model.combined_embedding(&h_map, &p);
    Ok(model.head_eval(0, &h_emb))
}

/// Predicted potential sequence, one independent head per step (variant D2).
pub fn forward_d2(
    model: &SurrogateModel,
    inputs: &MapInputs,
    pose: (f64, f64, f64),
    origin: (f64, f64),
) -> Result<Vec<f64>, SurrogateError> {
    model.expect_variant(Variant::D2)?;
    let h_map = model.map_embedding(&inputs.vector);
    let p = point_input(&model.meta, origin, pose.0, pose.1, pose.2);
    let h_emb = model.combined_embedding(&h_map, &p);
    Ok((0..=model.meta.horizon)
        .map(|k| model.head_eval(k, &h_emb))
        .collect())
}

/// Autoregressive potential sequence conditioned on its own predictions
/// (variant D3).
pub fn forward_d3(
    model: &SurrogateModel,
    inputs: &MapInputs,
    pose: (f64, f64, f64),
    origin: (f64, f64),
) -> Result<Vec<f64>, SurrogateError> {
    model.expect_variant(Variant::D3)?;
    let h_map = model.map_embedding(&inputs.vector);
    let p = point_input(&model.meta, origin, pose.0, pose.1, pose.2);
    let h_emb = model.combined_embedding(&h_map, &p);
    let mut out = Vec::with_capacity(model.meta.horizon + 1);
    for k in 0..=model.meta.horizon {
        let v = model.d3_head_eval(&h_emb, k, &out);
        out.push(v);
    }
    Ok(out)
}

/// D3 sequence with an externally supplied (teacher-forced) context.
pub fn forward_d3_teacher(
    model: &SurrogateModel,
    inputs: &MapInputs,
    pose: (f64, f64, f64),
    origin: (f64, f64),
    context: &[f64],
) -> Result<Vec<f64>, SurrogateError> {
    model.expect_variant(Variant::D3)?;
    assert!(context.len() >= model.meta.horizon);
    let h_map = model.map_embedding(&inputs.vector);
    let p = point_input(&model.meta, origin, pose.0, pose.1, pose.2);
    let h_emb = model.combined_embedding(&h_map, &p);
    Ok((0..=model.meta.horizon)
        .map(|k| model.d3_head_eval(&h_emb, k, context))
        .collect())
}

/// Potential oracle backed by a trained surrogate; gradients by central
/// finite differences over the network inputs.
pub struct SurrogateOracle {
    model: Arc<SurrogateModel>,
    /// One h_map per frame for D1 (obstacle re-encoded per step); a single
    /// h_map for D2/D3.
    h_maps: Vec<Array1<f64>>,
    origin: (f64, f64),
    extent: Extent,
    horizon: usize,
    fd_step: f64,
}

impl SurrogateOracle {
    pub fn new(
        model: Arc<SurrogateModel>,
        static_grid: &OccupancyGrid,
        footprint_label: &str,
        agent: Option<&DynamicObstacle>,
        horizon: usize,
        dt: f64,
    ) -> Result<Self, SurrogateError> {
        let meta = &model.meta;
        let h_maps = match model.variant {
            Variant::D1 => (0..=horizon)
                .map(|k| {
                    let obs = agent.map(|ob| {
                        let moved = propagate_obstacle(ob, k, dt);
                        (moved.x, moved.y, moved.heading)
                    });
                    MapInputs::new(meta, static_grid, footprint_label, obs)
                        .map(|inp| model.map_embedding(&inp.vector))
                })
                .collect::<Result<Vec<_>, _>>()?,
            Variant::D2 | Variant::D3 => {
                if horizon > meta.horizon {
                    return Err(SurrogateError::DimensionMismatch(format!(
                        "requested horizon {horizon} exceeds the model horizon {}",
                        meta.horizon
                    )));
                }
                let obs = agent.map(|ob| (ob.x, ob.y, ob.heading));
                let inp = MapInputs::new(meta, static_grid, footprint_label, obs)?;
                vec![model.map_embedding(&inp.vector)]
            }
        };
        Ok(Self {
            model,
            h_maps,
            origin: (static_grid.geometry.origin_x, static_grid.geometry.origin_y),
            extent: static_grid.geometry.center_extent(),
            horizon,
            fd_step: 1e-4,
        })
    }

    /// Raw network prediction for frame `step` at a pose.
    pub fn value(&self, step: usize, x: f64, y: f64, theta: f64) -> f64 {
        let meta = &self.model.meta;
        let p = point_input(meta, self.origin, x, y, theta);
        match self.model.variant {
            Variant::D1 => {
                let h_emb = self.model.combined_embedding(&self.h_maps[step], &p);
                self.model.head_eval(0, &h_emb)
            }
            Variant::D2 => {
                let h_emb = self.model.combined_embedding(&self.h_maps[0], &p);
                self.model.head_eval(step, &h_emb)
            }
            Variant::D3 => {
                let h_emb = self.model.combined_embedding(&self.h_maps[0], &p);
                let mut prev = Vec::with_capacity(step + 1);
                for k in 0..=step {
                    let v = self.model.d3_head_eval(&h_emb, k, &prev);
                    prev.push(v);
                }
                prev[step]
            }
        }
    }
}

impl PotentialOracle for SurrogateOracle {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn extent(&self) -> Extent {
        self.extent
    }

    fn sample(&self, step: usize, x: f64, y: f64, theta: f64) -> PotentialSample {
        let cx = x.clamp(self.extent.x_min, self.extent.x_max);
        let cy = y.clamp(self.extent.y_min, self.extent.y_max);
        let h = self.fd_step;
        let value = self.value(step, cx, cy, theta);
        let gx = if x < self.extent.x_min || x > self.extent.x_max {
            0.0
        } else {
            (self.value(step, cx + h, cy, theta) - self.value(step, cx - h, cy, theta)) / (2.0 * h)
        };
        let gy = if y < self.extent.y_min || y > self.extent.y_max {
            0.0
        } else {
            (self.value(step, cx, cy + h, theta) - self.value(step, cx, cy - h, theta)) / (2.0 * h)
        };
        let gt =
            (self.value(step, cx, cy, theta + h) - self.value(step, cx, cy, theta - h)) / (2.0 * h);
        PotentialSample {
            value,
            grad: [gx, gy, gt],
        }
    }
}

/// Oracle source that rebuilds a [`SurrogateOracle`] from the current
/// obstacle observation each replan. Surrogates model a single agent; the
/// first obstacle is encoded, any others are ignored.
pub struct SurrogateOracleSource {
    pub model: Arc<SurrogateModel>,
    pub footprint_label: String,
}

impl HorizonOracleSource for SurrogateOracleSource {
    fn oracle_at(
        &mut self,
        world: &mut WorldModel,
        step: usize,
        horizon: usize,
    ) -> Result<Box<dyn PotentialOracle>, MpcError> {
        let agent = world
            .obstacles
            .first()
            .map(|ob| propagate_obstacle(ob, step, world.dt));
        let oracle = SurrogateOracle::new(
            Arc::clone(&self.model),
            &world.static_grid,
            &self.footprint_label,
            agent.as_ref(),
            horizon,
            world.dt,
        )
        .map_err(|e| MpcError::Oracle(e.to_string()))?;
        Ok(Box::new(oracle))
    }
}
