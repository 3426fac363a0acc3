//! Theta* any-angle global planner over the inflated static grid.
//!
//! Inflation marks every cell whose SDF is at most the inflation radius as
//! occupied. Theta* runs A* over the 8-connected grid but reparents nodes to
//! any ancestor with line-of-sight, so paths come out as short polylines
//! instead of staircases. Line-of-sight uses supercover traversal (every
//! cell the segment touches, both side cells at exact corner crossings), so
//! paths cannot cut corners.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::grid::{compute_sdf, GridError, OccupancyGrid};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("no collision-free path between the endpoints")]
    NoPath,
    #[error("endpoint outside the grid")]
    OutsideGrid,
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Occupancy grid dilated by a disc of the given radius.
#[derive(Debug, Clone)]
pub struct InflatedGrid {
    pub grid: OccupancyGrid,
    pub inflation_radius: f64,
}

/// Mark every cell with SDF <= radius as occupied.
pub fn inflate(grid: &OccupancyGrid, radius: f64) -> InflatedGrid {
    assert!(radius >= 0.0, "inflation radius must be non-negative");
    let sdf = compute_sdf(grid);
    let geom = grid.geometry;
    let mut out = OccupancyGrid::empty(geom);
    for row in 0..geom.height {
        for col in 0..geom.width {
            if sdf.value(row, col) <= radius {
                out.set(row, col, true);
            }
        }
    }
    InflatedGrid {
        grid: out,
        inflation_radius: radius,
    }
}

/// Supercover line-of-sight between two cell centers: false iff any cell
/// touched by the segment is occupied.
pub fn line_of_sight(grid: &OccupancyGrid, a: (usize, usize), b: (usize, usize)) -> bool {
    let (mut row, mut col) = (a.0 as i64, a.1 as i64);
    let (row1, col1) = (b.0 as i64, b.1 as i64);
    let d_row = (row1 - row).abs();
    let d_col = (col1 - col).abs();
    let s_row = if row < row1 { 1 } else { -1 };
    let s_col = if col < col1 { 1 } else { -1 };

    let occupied = |r: i64, c: i64| grid.is_occupied_i64(r, c);
    if occupied(row, col) {
        return false;
    }
    let (mut i_row, mut i_col) = (0i64, 0i64);
    while i_row < d_row || i_col < d_col {
        // Compare the next row/col boundary crossings: (i+0.5)/d on each axis.
        let decision = (1 + 2 * i_col) * d_row - (1 + 2 * i_row) * d_col;
        if decision == 0 {
            // Exact corner: the segment touches both side cells.
            if occupied(row + s_row, col) || occupied(row, col + s_col) {
                return false;
            }
            row += s_row;
            col += s_col;
            i_row += 1;
            i_col += 1;
        } else if decision < 0 {
            col += s_col;
            i_col += 1;
        } else {
            row += s_row;
            i_row += 1;
        }
        if occupied(row, col) {
            return false;
        }
    }
    true
}

#[derive(PartialEq)]
struct QueueEntry {
    f: f64,
    g: f64,
    cell: usize,
}

impl Eq for QueueEntry {}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap by (f, g, cell index) for deterministic expansion order.
        other
            .f
            .total_cmp(&self.f)
            .then(other.g.total_cmp(&self.g))
            .then(other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const NEIGHBORS: [(i64, i64); 8] = [
    (-1, 0),
    (1, 0),
    (0, -1),
    (0, 1),
    (-1, -1),
    (-1, 1),
    (1, -1),
    (1, 1),
];

fn cell_distance(a: (usize, usize), b: (usize, usize)) -> f64 {
    let dr = a.0 as f64 - b.0 as f64;
    let dc = a.1 as f64 - b.1 as f64;
    (dr * dr + dc * dc).sqrt()
}

/// Any-angle shortest path between two free cells; returns the polyline of
/// cell-center world coordinates from start to goal.
pub fn theta_star(
    inflated: &InflatedGrid,
    start: (usize, usize),
    goal: (usize, usize),
) -> Result<Vec<(f64, f64)>, PlanError> {
    let grid = &inflated.grid;
    let geom = grid.geometry;
    if start.0 >= geom.height || start.1 >= geom.width || goal.0 >= geom.height || goal.1 >= geom.width
    {
        return Err(PlanError::OutsideGrid);
    }
    if grid.is_occupied(start.0, start.1) || grid.is_occupied(goal.0, goal.1) {
        return Err(PlanError::NoPath);
    }
    let to_world = |cell: (usize, usize)| geom.cell_center(cell.0 as i64, cell.1 as i64);
    if start == goal {
        return Ok(vec![to_world(start)]);
    }

    let n = geom.len();
    let idx = |c: (usize, usize)| c.0 * geom.width + c.1;
    let cell_of = |i: usize| (i / geom.width, i % geom.width);
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();

    let si = idx(start);
    g[si] = 0.0;
    parent[si] = si;
    heap.push(QueueEntry {
        f: cell_distance(start, goal),
        g: 0.0,
        cell: si,
    });

    while let Some(entry) = heap.pop() {
        let ci = entry.cell;
        if closed[ci] {
            continue;
        }
        closed[ci] = true;
        let cell = cell_of(ci);
        if cell == goal {
            // Walk the parent chain back to the start.
            let mut chain = vec![ci];
            let mut cur = ci;
            while parent[cur] != cur {
                cur = parent[cur];
                chain.push(cur);
            }
            chain.reverse();
            return Ok(chain.into_iter().map(|i| to_world(cell_of(i))).collect());
        }

        let par = parent[ci];
        for (dr, dc) in NEIGHBORS {
            let nr = cell.0 as i64 + dr;
            let nc = cell.1 as i64 + dc;
            if nr < 0 || nc < 0 || nr as usize >= geom.height || nc as usize >= geom.width {
                continue;
            }
            let ncell = (nr as usize, nc as usize);
            if grid.is_occupied(ncell.0, ncell.1) {
                continue;
            }
            // No corner cutting on diagonal moves.
            if dr != 0 && dc != 0 {
                let side_a = (cell.0 as i64 + dr) as usize;
                let side_b = (cell.1 as i64 + dc) as usize;
                if grid.is_occupied(side_a, cell.1) || grid.is_occupied(cell.0, side_b) {
                    continue;
                }
            }
            let ni = idx(ncell);
            if closed[ni] {
                continue;
            }
            // Path 2 (any-angle): reparent to the expanding node's parent
            // when it has line-of-sight; by the triangle inequality this is
            // never longer than stepping through the current node.
            let (cand_parent, cand_g) = if par != usize::MAX && line_of_sight(grid, cell_of(par), ncell)
            {
                (par, g[par] + cell_distance(cell_of(par), ncell))
            } else {
                (ci, g[ci] + cell_distance(cell, ncell))
            };
            if cand_g < g[ni] {
                g[ni] = cand_g;
                parent[ni] = cand_parent;
                heap.push(QueueEntry {
                    f: cand_g + cell_distance(ncell, goal),
                    g: cand_g,
                    cell: ni,
                });
            }
        }
    }
    Err(PlanError::NoPath)
}

/// Plan between world positions: snap to cells, run Theta*.
pub fn plan_path(
    inflated: &InflatedGrid,
    start: (f64, f64),
    goal: (f64, f64),
) -> Result<Vec<(f64, f64)>, PlanError> {
    let geom = inflated.grid.geometry;
    let s = geom
        .world_to_cell(start.0, start.1)
        .ok_or(PlanError::OutsideGrid)?;
    let g = geom
        .world_to_cell(goal.0, goal.1)
        .ok_or(PlanError::OutsideGrid)?;
    theta_star(inflated, s, g)
}

/// Polyline length in meters.
pub fn polyline_length(path: &[(f64, f64)]) -> f64 {
    path.windows(2)
        .map(|w| ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt())
        .sum()
}
