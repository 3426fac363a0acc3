//! Supervised dataset for the potential surrogates.
//!
//! Per submap: one static copy plus 3 random agent headings x 10 propagated
//! agent positions = 31 copies. Per copy: random free-space robot positions,
//! each with several random orientations. Targets are the footprint-pooled
//! potentials of the frames where the agent advanced 0..=H steps from the
//! copy's agent pose, computed with the analytic grid pipeline.

use std::io::Write;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::grid::{
    compute_sdf, footprint_potential, pointwise_costmap, CostGrid, Footprint, GridError,
    OccupancyGrid, PotentialWeights,
};
use crate::seeding::derive_seed;
use crate::world::{propagate_obstacle, stamp_obstacle, DynamicObstacle};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("map {index} is {width}x{height}; the dataset needs at least {need}x{need}")]
    MapTooSmall {
        index: usize,
        width: usize,
        height: usize,
        need: usize,
    },
    #[error("could not sample a free pose after {0} attempts")]
    SamplingExhausted(usize),
    #[error("dataset row references unknown submap {0}")]
    UnknownSubmap(usize),
    #[error("csv parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    /// Robot positions sampled per copy; each gets `orientations_per_pose`
    /// rows.
    pub samples_per_copy: usize,
    pub orientations_per_pose: usize,
    /// Prediction steps beyond the current frame.
    pub horizon: usize,
    /// Seconds per prediction step.
    pub dt: f64,
    pub agent_speed: f64,
    pub agent_half_length: f64,
    pub agent_half_width: f64,
    /// Submaps are cropped to this size; smaller maps are rejected.
    pub map_size: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            samples_per_copy: 10,
            orientations_per_pose: 10,
            horizon: 10,
            dt: 1.0 / 3.0,
            agent_speed: 0.3,
            agent_half_length: 0.35,
            agent_half_width: 0.25,
            map_size: 50,
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn copies_per_submap(&self) -> usize {
        31
    }

    pub fn rows_per_submap(&self) -> usize {
        self.copies_per_submap() * self.samples_per_copy * self.orientations_per_pose
    }
}

/// One supervised sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRow {
    pub submap_id: usize,
    /// 0 = static scene, 1..=30 = agent placements.
    pub copy_id: usize,
    pub robot_x: f64,
    pub robot_y: f64,
    pub robot_theta: f64,
    /// Agent pose (x, y, heading); `None` on the static copy.
    pub agent: Option<(f64, f64, f64)>,
    pub footprint: String,
    /// P_0..P_H, one per future step.
    pub targets: Vec<f64>,
}

impl DatasetRow {
    pub fn agent_obstacle(&self, cfg: &DatasetConfig) -> Option<DynamicObstacle> {
        self.agent.map(|(x, y, heading)| DynamicObstacle {
            x,
            y,
            heading,
            speed: cfg.agent_speed,
            half_length: cfg.agent_half_length,
            half_width: cfg.agent_half_width,
        })
    }
}

fn crop_map(grid: &OccupancyGrid, index: usize, size: usize) -> Result<OccupancyGrid, DatasetError> {
    let g = grid.geometry;
    if g.width < size || g.height < size {
        return Err(DatasetError::MapTooSmall {
            index,
            width: g.width,
            height: g.height,
            need: size,
        });
    }
    if g.width == size && g.height == size {
        return Ok(grid.clone());
    }
    let geom = crate::grid::GridGeometry::new(size, size, g.resolution, g.origin_x, g.origin_y)
        .expect("valid crop geometry");
    let mut out = OccupancyGrid::empty(geom);
    for r in 0..size {
        for c in 0..size {
            out.set(r, c, grid.is_occupied(r, c));
        }
    }
    Ok(out)
}

/// Per-step costmaps for one copy: the agent advanced k steps from `agent`.
fn copy_costmaps(
    static_map: &OccupancyGrid,
    agent: Option<&DynamicObstacle>,
    weights: PotentialWeights,
    horizon: usize,
    dt: f64,
) -> Vec<CostGrid> {
    match agent {
        None => {
            let cm = pointwise_costmap(&compute_sdf(static_map), weights);
            vec![cm; horizon + 1]
        }
        Some(ob) => (0..=horizon)
            .map(|k| {
                let stamped = stamp_obstacle(static_map, &propagate_obstacle(ob, k, dt));
                pointwise_costmap(&compute_sdf(&stamped), weights)
            })
            .collect(),
    }
}

/// Sample a continuous position whose cell is free on the given grid.
fn sample_free_position<R: Rng>(
    rng: &mut R,
    grid: &OccupancyGrid,
    margin: f64,
) -> Result<(f64, f64), DatasetError> {
    let g = grid.geometry;
    let ext = g.center_extent();
    for _ in 0..1000 {
        let x = rng.gen_range(ext.x_min + margin..ext.x_max - margin);
        let y = rng.gen_range(ext.y_min + margin..ext.y_max - margin);
        if let Some((r, c)) = g.world_to_cell(x, y) {
            if !grid.is_occupied(r, c) {
                return Ok((x, y));
            }
        }
    }
    Err(DatasetError::SamplingExhausted(1000))
}

/// Generate the full dataset over a set of submaps.
///
/// Deterministic for a fixed seed: every (submap, copy) pair draws from its
/// own derived stream, so map order is the only coupling.
pub fn generate_dataset(
    maps: &[OccupancyGrid],
    footprints: &[Footprint],
    weights: PotentialWeights,
    cfg: &DatasetConfig,
) -> Result<Vec<DatasetRow>, DatasetError> {
    assert!(!maps.is_empty() && !footprints.is_empty());
    let mut rows = Vec::with_capacity(maps.len() * cfg.rows_per_submap());

    for (submap_id, raw_map) in maps.iter().enumerate() {
        let map = crop_map(raw_map, submap_id, cfg.map_size)?;
        let mut agent_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1, submap_id as u64));
        // One random base position, three random headings.
        let base = sample_free_position(&mut agent_rng, &map, 0.3)?;
        let headings: Vec<f64> = (0..3)
            .map(|_| agent_rng.gen_range(0.0..std::f64::consts::TAU))
            .collect();

        for copy_id in 0..cfg.copies_per_submap() {
            let agent = if copy_id == 0 {
                None
            } else {
                let direction = (copy_id - 1) / 10;
                let position = (copy_id - 1) % 10;
                let ob = DynamicObstacle {
                    x: base.0,
                    y: base.1,
                    heading: headings[direction],
                    speed: cfg.agent_speed,
                    half_length: cfg.agent_half_length,
                    half_width: cfg.agent_half_width,
                };
                Some(propagate_obstacle(&ob, position, cfg.dt))
            };
            let costmaps = copy_costmaps(&map, agent.as_ref(), weights, cfg.horizon, cfg.dt);
            let frame0 = if let Some(ob) = agent.as_ref() {
                stamp_obstacle(&map, ob)
            } else {
                map.clone()
            };

            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                cfg.seed,
                2,
                (submap_id * cfg.copies_per_submap() + copy_id) as u64,
            ));
            for _ in 0..cfg.samples_per_copy {
                let (rx, ry) = sample_free_position(&mut rng, &frame0, 0.0)?;
                for _ in 0..cfg.orientations_per_pose {
                    let rtheta = rng.gen_range(0.0..std::f64::consts::TAU);
                    let footprint = &footprints[rng.gen_range(0..footprints.len())];
                    let targets = costmaps
                        .iter()
                        .map(|cm| footprint_potential(cm, footprint, rx, ry, rtheta))
                        .collect::<Result<Vec<f64>, _>>()?;
                    rows.push(DatasetRow {
                        submap_id,
                        copy_id,
                        robot_x: rx,
                        robot_y: ry,
                        robot_theta: rtheta,
                        agent: agent.map(|a| (a.x, a.y, a.heading)),
                        footprint: footprint.label.clone(),
                        targets,
                    });
                }
            }
        }
    }
    Ok(rows)
}

/// Procedural 5x5 m submaps for dataset generation: boundary walls, straight
/// walls with door gaps, and rectangular blocks. All static structure snaps
/// to a 0.5 m lattice so the pooled map the surrogate sees is a lossless
/// rendering of the scene.
pub fn generate_submaps(count: usize, seed: u64) -> Vec<OccupancyGrid> {
    let geom = crate::grid::GridGeometry::new(50, 50, 0.1, 0.0, 0.0).expect("static geometry");
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 3, i as u64));
            let mut grid = OccupancyGrid::empty(geom);
            // Lattice helper: block units of 5 cells (0.5 m).
            let fill_blocks = |grid: &mut OccupancyGrid, r0: i64, c0: i64, r1: i64, c1: i64| {
                grid.fill_rect(5 * r0, 5 * c0, 5 * r1 + 4, 5 * c1 + 4, true);
            };
            match rng.gen_range(0..3) {
                0 => {
                    // Room with a wall and a door gap.
                    for edge in 0..4 {
                        match edge {
                            0 => fill_blocks(&mut grid, 0, 0, 0, 9),
                            1 => fill_blocks(&mut grid, 9, 0, 9, 9),
                            2 => fill_blocks(&mut grid, 0, 0, 9, 0),
                            _ => fill_blocks(&mut grid, 0, 9, 9, 9),
                        }
                    }
                    let vertical = rng.gen_bool(0.5);
                    let line = rng.gen_range(3..7);
                    let door = rng.gen_range(2..6);
                    let door_len = rng.gen_range(2..4); // 1.0-1.5 m opening
                    for b in 1..9i64 {
                        if (b - door).abs() as usize >= door_len {
                            if vertical {
                                fill_blocks(&mut grid, b, line, b, line);
                            } else {
                                fill_blocks(&mut grid, line, b, line, b);
                            }
                        }
                    }
                }
                1 => {
                    // Two parallel walls forming a corridor with gaps.
                    let horizontal = rng.gen_bool(0.5);
                    let lane_a = rng.gen_range(1..4);
                    let lane_b = rng.gen_range(6..9);
                    for (lane, door) in [(lane_a, rng.gen_range(1..9)), (lane_b, rng.gen_range(1..9))] {
                        for b in 0..10i64 {
                            if (b - door).abs() >= 2 {
                                if horizontal {
                                    fill_blocks(&mut grid, lane, b, lane, b);
                                } else {
                                    fill_blocks(&mut grid, b, lane, b, lane);
                                }
                            }
                        }
                    }
                }
                _ => {
                    // Scattered rectangular blocks.
                    for _ in 0..rng.gen_range(2..5) {
                        let r = rng.gen_range(0..8);
                        let c = rng.gen_range(0..8);
                        let h = rng.gen_range(1..3);
                        let w = rng.gen_range(1..3);
                        fill_blocks(&mut grid, r, c, (r + h - 1).min(9), (c + w - 1).min(9));
                    }
                }
            }
            grid
        })
        .collect()
}

/// Recompute a row's targets from its inputs through the analytic pipeline.
pub fn audit_row(
    row: &DatasetRow,
    map: &OccupancyGrid,
    weights: PotentialWeights,
    cfg: &DatasetConfig,
) -> Result<Vec<f64>, DatasetError> {
    let map = crop_map(map, row.submap_id, cfg.map_size)?;
    let footprint = Footprint::by_label(&row.footprint)?;
    let agent = row.agent_obstacle(cfg);
    let costmaps = copy_costmaps(&map, agent.as_ref(), weights, cfg.horizon, cfg.dt);
    Ok(costmaps
        .iter()
        .map(|cm| footprint_potential(cm, &footprint, row.robot_x, row.robot_y, row.robot_theta))
        .collect::<Result<Vec<f64>, _>>()?)
}

/// Write rows as CSV: submap, copy, robot pose, agent pose (empty when
/// absent), footprint label, then P0..PH. Floats use the shortest
/// round-trippable representation.
pub fn write_csv<P: AsRef<Path>>(rows: &[DatasetRow], horizon: usize, path: P) -> Result<(), DatasetError> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(file, "submap_id,copy_id,rx,ry,rtheta,ax,ay,ah,footprint")?;
    for k in 0..=horizon {
        write!(file, ",P{k}")?;
    }
    writeln!(file)?;
    for row in rows {
        write!(
            file,
            "{},{},{},{},{}",
            row.submap_id, row.copy_id, row.robot_x, row.robot_y, row.robot_theta
        )?;
        match row.agent {
            Some((ax, ay, ah)) => write!(file, ",{ax},{ay},{ah}")?,
            None => write!(file, ",,,")?,
        }
        write!(file, ",{}", row.footprint)?;
        for t in &row.targets {
            write!(file, ",{t}")?;
        }
        writeln!(file)?;
    }
    Ok(())
}

pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<Vec<DatasetRow>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let header_len = reader.headers()?.len();
    if header_len < 10 {
        return Err(DatasetError::Parse {
            line: 1,
            message: format!("expected at least 10 columns, found {header_len}"),
        });
    }
    let target_count = header_len - 9;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let field = |idx: usize| -> Result<&str, DatasetError> {
            record.get(idx).ok_or(DatasetError::Parse {
                line,
                message: format!("missing column {idx}"),
            })
        };
        let num = |idx: usize| -> Result<f64, DatasetError> {
            field(idx)?.parse().map_err(|e| DatasetError::Parse {
                line,
                message: format!("column {idx}: {e}"),
            })
        };
        let agent = if field(5)?.is_empty() {
            None
        } else {
            Some((num(5)?, num(6)?, num(7)?))
        };
        let mut targets = Vec::with_capacity(target_count);
        for k in 0..target_count {
            targets.push(num(9 + k)?);
        }
        rows.push(DatasetRow {
            submap_id: field(0)?.parse().map_err(|e| DatasetError::Parse {
                line,
                message: format!("submap_id: {e}"),
            })?,
            copy_id: field(1)?.parse().map_err(|e| DatasetError::Parse {
                line,
                message: format!("copy_id: {e}"),
            })?,
            robot_x: num(2)?,
            robot_y: num(3)?,
            robot_theta: num(4)?,
            agent,
            footprint: field(8)?.to_string(),
            targets,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridGeometry;

    fn submap(seed: u64) -> OccupancyGrid {
        use rand::prelude::*;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut grid =
            OccupancyGrid::empty(GridGeometry::new(50, 50, 0.1, 0.0, 0.0).unwrap());
        for _ in 0..3 {
            let r = rng.gen_range(5..40);
            let c = rng.gen_range(5..40);
            grid.fill_rect(r, c, r + rng.gen_range(2..6), c + rng.gen_range(2..6), true);
        }
        grid
    }

    fn small_cfg() -> DatasetConfig {
        DatasetConfig {
            samples_per_copy: 2,
            orientations_per_pose: 10,
            horizon: 4,
            seed: 7,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn row_count_is_copies_times_samples() {
        let maps = [submap(1)];
        let rows = generate_dataset(
            &maps,
            &[Footprint::folded_arm()],
            PotentialWeights::default(),
            &small_cfg(),
        )
        .unwrap();
        // 31 copies x 2 positions x 10 orientations.
        assert_eq!(rows.len(), 620);
        assert_eq!(rows.iter().filter(|r| r.copy_id == 0).count(), 20);
    }

    #[test]
    fn static_copy_targets_are_constant() {
        let maps = [submap(2)];
        let rows = generate_dataset(
            &maps,
            &[Footprint::folded_arm()],
            PotentialWeights::default(),
            &small_cfg(),
        )
        .unwrap();
        for row in rows.iter().filter(|r| r.copy_id == 0) {
            assert!(row.agent.is_none());
            for t in &row.targets[1..] {
                assert_eq!(*t, row.targets[0]);
            }
        }
    }

    #[test]
    fn targets_match_audit_recomputation_exactly() {
        let maps = [submap(3), submap(4)];
        let cfg = small_cfg();
        let w = PotentialWeights::default();
        let rows = generate_dataset(&maps, &[Footprint::folded_arm()], w, &cfg).unwrap();
        for row in rows.iter().step_by(37) {
            let audited = audit_row(row, &maps[row.submap_id], w, &cfg).unwrap();
            assert_eq!(audited, row.targets, "row {row:?}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let maps = [submap(5)];
        let cfg = small_cfg();
        let w = PotentialWeights::default();
        let a = generate_dataset(&maps, &[Footprint::folded_arm()], w, &cfg).unwrap();
        let b = generate_dataset(&maps, &[Footprint::folded_arm()], w, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn undersized_maps_are_rejected() {
        let small = OccupancyGrid::empty(GridGeometry::new(30, 30, 0.1, 0.0, 0.0).unwrap());
        let err = generate_dataset(
            &[small],
            &[Footprint::folded_arm()],
            PotentialWeights::default(),
            &small_cfg(),
        )
        .unwrap_err();
        assert!(matches!(err, DatasetError::MapTooSmall { .. }));
    }

    #[test]
    fn csv_round_trips_exactly() {
        let maps = [submap(6)];
        let cfg = small_cfg();
        let rows = generate_dataset(
            &maps,
            &[Footprint::folded_arm(), Footprint::outstretched_arm()],
            PotentialWeights::default(),
            &cfg,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        write_csv(&rows, cfg.horizon, &path).unwrap();
        let loaded = read_csv(&path).unwrap();
        assert_eq!(loaded, rows);
    }
}
