//! Volumetric baseline planner: a risk-inflated occupancy grid with an
//! 8-connected shortest-path search.
//!
//! The simulated world is planar, so a "voxel" is a square cell (default
//! 0.8 m). Free cells near obstacles become risk cells whose traversal costs
//! a multiplier (default 2), which reproduces the safe-but-longer behaviour
//! of grid planners without claiming fidelity to any particular codebase.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{segments_intersect, Point3, Polygon2};
use crate::world::Scenario;

/// Default cell edge length, meters.
pub const DEFAULT_CELL_SIZE_M: f64 = 0.8;
/// Default risk factor: inflation radius in cells and traversal multiplier.
pub const DEFAULT_RISK_FACTOR: u32 = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VpError {
    #[error("point ({x:.2}, {y:.2}) is outside the grid")]
    OutOfGrid { x: f64, y: f64 },
    #[error("{which} cell ({0}, {1}) is occupied", cell.0, cell.1)]
    BlockedEndpoint {
        which: &'static str,
        cell: (usize, usize),
    },
    #[error("no grid path between ({0}, {1}) and ({2}, {3})", from.0, from.1, to.0, to.1)]
    Unreachable {
        from: (usize, usize),
        to: (usize, usize),
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Cell {
    Free,
    Occupied,
    Risk { multiplier: f64 },
}

impl Cell {
    fn multiplier(&self) -> Option<f64> {
        match self {
            Cell::Free => Some(1.0),
            Cell::Risk { multiplier } => Some(*multiplier),
            Cell::Occupied => None,
        }
    }
}

/// Planar occupancy grid anchored at `origin` (cell (0,0) lower-left corner).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    origin: [f64; 2],
    cell_size: f64,
    width: usize,
    height: usize,
    cells: Vec<Cell>,
}

impl OccupancyGrid {
    pub fn new(origin: [f64; 2], cell_size: f64, width: usize, height: usize) -> Self {
        assert!(cell_size > 0.0, "cell size must be positive");
        Self {
            origin,
            cell_size,
            width,
            height,
            cells: vec![Cell::Free; width * height],
        }
    }

    /// Rasterize a scenario: every cell whose interior overlaps a footprint
    /// becomes occupied. Cells merely touching a footprint boundary stay
    /// free (the overlap test shrinks the cell by a tolerance).
    pub fn rasterize(scenario: &Scenario, cell_size: f64) -> Self {
        let origin = scenario.bounds.min;
        let width = (scenario.bounds.width() / cell_size).ceil() as usize;
        let height = (scenario.bounds.height() / cell_size).ceil() as usize;
        let mut grid = Self::new(origin, cell_size, width, height);
        for iy in 0..height {
            for ix in 0..width {
                let x0 = origin[0] + ix as f64 * cell_size;
                let y0 = origin[1] + iy as f64 * cell_size;
                let occupied = scenario
                    .footprints()
                    .any(|(_, poly)| cell_overlaps(poly, x0, y0, cell_size));
                if occupied {
                    grid.set_cell(ix, iy, Cell::Occupied);
                }
            }
        }
        grid
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn cell(&self, ix: usize, iy: usize) -> Cell {
        self.cells[iy * self.width + ix]
    }

    pub fn set_cell(&mut self, ix: usize, iy: usize, cell: Cell) {
        self.cells[iy * self.width + ix] = cell;
    }

    pub fn count(&self, pred: impl Fn(Cell) -> bool) -> usize {
        self.cells.iter().filter(|c| pred(**c)).count()
    }

    pub fn world_to_cell(&self, p: Point3) -> Option<(usize, usize)> {
        let fx = (p.x - self.origin[0]) / self.cell_size;
        let fy = (p.y - self.origin[1]) / self.cell_size;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
        (ix < self.width && iy < self.height).then_some((ix, iy))
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Point3 {
        Point3::xy(
            self.origin[0] + (ix as f64 + 0.5) * self.cell_size,
            self.origin[1] + (iy as f64 + 0.5) * self.cell_size,
        )
    }

    /// Turn free cells within `risk_factor` cells (Chebyshev) of an occupied
    /// cell into risk cells with traversal multiplier `risk_factor`.
    /// Occupied cells are untouched; applying twice changes nothing.
    pub fn inflate_risk(&mut self, risk_factor: u32) {
        if risk_factor == 0 {
            return;
        }
        let r = risk_factor as isize;
        let multiplier = f64::from(risk_factor);
        let occupied: Vec<(isize, isize)> = (0..self.height)
            .flat_map(|iy| (0..self.width).map(move |ix| (ix, iy)))
            .filter(|(ix, iy)| self.cell(*ix, *iy) == Cell::Occupied)
            .map(|(ix, iy)| (ix as isize, iy as isize))
            .collect();
        for (ox, oy) in occupied {
            for dy in -r..=r {
                for dx in -r..=r {
                    let (x, y) = (ox + dx, oy + dy);
                    if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
                        continue;
                    }
                    let (x, y) = (x as usize, y as usize);
                    if self.cell(x, y) == Cell::Free {
                        self.set_cell(x, y, Cell::Risk { multiplier });
                    }
                }
            }
        }
    }

    /// Text raster for debugging: `#` occupied, `~` risk, `.` free. Row 0 is
    /// printed at the bottom so the dump matches world coordinates.
    pub fn render_ascii(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for iy in (0..self.height).rev() {
            for ix in 0..self.width {
                out.push(match self.cell(ix, iy) {
                    Cell::Free => '.',
                    Cell::Occupied => '#',
                    Cell::Risk { .. } => '~',
                });
            }
            out.push('\n');
        }
        out
    }
}

fn cell_overlaps(poly: &Polygon2, x0: f64, y0: f64, size: f64) -> bool {
    // The shrink must dominate the boundary-inclusive containment tolerance,
    // or cells merely touching a footprint edge would count as occupied.
    let eps = (size * 1e-3).max(1e-6);
    let (x0, y0, x1, y1) = (x0 + eps, y0 + eps, x0 + size - eps, y0 + size - eps);
    let corners = [[x0, y0], [x1, y0], [x1, y1], [x0, y1]];
    if corners
        .iter()
        .any(|c| poly.contains(Point3::xy(c[0], c[1])))
    {
        return true;
    }
    if poly
        .vertices()
        .iter()
        .any(|v| v[0] > x0 && v[0] < x1 && v[1] > y0 && v[1] < y1)
    {
        return true;
    }
    let rect_edges = [
        (corners[0], corners[1]),
        (corners[1], corners[2]),
        (corners[2], corners[3]),
        (corners[3], corners[0]),
    ];
    let verts = poly.vertices();
    let n = verts.len();
    (0..n).any(|i| {
        let a = verts[i];
        let b = verts[(i + 1) % n];
        rect_edges
            .iter()
            .any(|(r0, r1)| segments_intersect(a, b, *r0, *r1))
    })
}

/// A planned grid route: cells, world-space waypoints at cell centers,
/// geometric length, risk-weighted cost and planning time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPlan {
    pub cells: Vec<(usize, usize)>,
    pub waypoints: Vec<Point3>,
    pub length_m: f64,
    pub cost: f64,
    pub time_ms: f64,
}

#[derive(PartialEq)]
struct QueueEntry {
    cost: f64,
    index: usize,
}

impl Eq for QueueEntry {}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed for a min-heap; ties broken by cell index for determinism.
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const NEIGHBORS: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

fn diagonal_allowed(grid: &OccupancyGrid, cx: usize, cy: usize, dx: isize, dy: isize) -> bool {
    if dx == 0 || dy == 0 {
        return true;
    }
    // No corner cutting: both orthogonal neighbors of a diagonal move must be
    // passable, or the straight-line motion would clip the occupied corner.
    let (ox, oy) = ((cx as isize + dx) as usize, (cy as isize + dy) as usize);
    grid.cell(ox, cy) != Cell::Occupied && grid.cell(cx, oy) != Cell::Occupied
}

/// Cost-minimal 8-connected path. A step into a cell costs the Euclidean
/// step length times the destination cell's multiplier (free 1, risk as
/// configured); occupied cells are impassable and diagonal moves may not cut
/// their corners.
pub fn plan_grid(grid: &OccupancyGrid, start: Point3, goal: Point3) -> Result<GridPlan, VpError> {
    let t0 = Instant::now();
    let start_cell = grid.world_to_cell(start).ok_or(VpError::OutOfGrid {
        x: start.x,
        y: start.y,
    })?;
    let goal_cell = grid.world_to_cell(goal).ok_or(VpError::OutOfGrid {
        x: goal.x,
        y: goal.y,
    })?;
    if grid.cell(start_cell.0, start_cell.1) == Cell::Occupied {
        return Err(VpError::BlockedEndpoint {
            which: "start",
            cell: start_cell,
        });
    }
    if grid.cell(goal_cell.0, goal_cell.1) == Cell::Occupied {
        return Err(VpError::BlockedEndpoint {
            which: "goal",
            cell: goal_cell,
        });
    }

    let (w, h) = grid.dims();
    let idx = |c: (usize, usize)| c.1 * w + c.0;
    let mut dist = vec![f64::INFINITY; w * h];
    let mut prev: Vec<usize> = vec![usize::MAX; w * h];
    let mut done = vec![false; w * h];
    let mut heap = BinaryHeap::new();
    dist[idx(start_cell)] = 0.0;
    heap.push(QueueEntry {
        cost: 0.0,
        index: idx(start_cell),
    });

    while let Some(QueueEntry { cost, index }) = heap.pop() {
        if done[index] {
            continue;
        }
        done[index] = true;
        if index == idx(goal_cell) {
            break;
        }
        let (cx, cy) = (index % w, index / w);
        for (dx, dy) in NEIGHBORS {
            let (nx, ny) = (cx as isize + dx, cy as isize + dy);
            if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                continue;
            }
            let (nx, ny) = (nx as usize, ny as usize);
            let Some(multiplier) = grid.cell(nx, ny).multiplier() else {
                continue;
            };
            if !diagonal_allowed(grid, cx, cy, dx, dy) {
                continue;
            }
            let step = grid.cell_size() * ((dx * dx + dy * dy) as f64).sqrt();
            let next_cost = cost + step * multiplier;
            let nindex = ny * w + nx;
            if next_cost < dist[nindex] {
                dist[nindex] = next_cost;
                prev[nindex] = index;
                heap.push(QueueEntry {
                    cost: next_cost,
                    index: nindex,
                });
            }
        }
    }

    let goal_index = idx(goal_cell);
    if dist[goal_index].is_infinite() {
        return Err(VpError::Unreachable {
            from: start_cell,
            to: goal_cell,
        });
    }
    let mut cells = Vec::new();
    let mut cursor = goal_index;
    loop {
        cells.push((cursor % w, cursor / w));
        if cursor == idx(start_cell) {
            break;
        }
        cursor = prev[cursor];
    }
    cells.reverse();
    let waypoints: Vec<Point3> = cells
        .iter()
        .map(|(x, y)| grid.cell_center(*x, *y))
        .collect();
    let length_m = waypoints
        .windows(2)
        .map(|w| crate::geometry::euclidean(w[0], w[1]))
        .sum::<f64>()
        .max(0.0);
    Ok(GridPlan {
        cells,
        waypoints,
        length_m,
        cost: dist[goal_index],
        time_ms: t0.elapsed().as_secs_f64() * 1e3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose6;
    use crate::world::{TargetSpec, WorldBounds, SCENARIO_DOC_VERSION};

    fn scenario(bounds: (f64, f64), footprints: Vec<Polygon2>) -> Scenario {
        Scenario {
            version: SCENARIO_DOC_VERSION,
            name: "grid-test".into(),
            bounds: WorldBounds {
                min: [0.0, 0.0],
                max: [bounds.0, bounds.1],
            },
            obstacles: footprints,
            targets: Vec::<TargetSpec>::new(),
            robot_start: Pose6::level(Point3::xy(0.4, 0.4), 0.0),
            seed: 0,
        }
    }

    #[test]
    fn empty_world_rasterizes_free() {
        let grid = OccupancyGrid::rasterize(&scenario((16.0, 16.0), vec![]), 0.8);
        assert_eq!(grid.dims(), (20, 20));
        assert_eq!(grid.count(|c| c == Cell::Free), 400);
    }

    #[test]
    fn aligned_square_occupies_exactly_its_cells() {
        let square = Polygon2::rect(4.0, 4.0, 8.0, 8.0).unwrap();
        let grid = OccupancyGrid::rasterize(&scenario((16.0, 16.0), vec![square]), 0.8);
        assert_eq!(
            grid.count(|c| c == Cell::Occupied),
            25,
            "4 m / 0.8 m = 5 cells per side"
        );
    }

    #[test]
    fn mirrored_world_mirrors_occupancy() {
        let left = Polygon2::rect(2.0, 6.0, 5.0, 9.0).unwrap();
        let right = Polygon2::rect(11.0, 6.0, 14.0, 9.0).unwrap();
        let grid_l = OccupancyGrid::rasterize(&scenario((16.0, 16.0), vec![left]), 0.8);
        let grid_r = OccupancyGrid::rasterize(&scenario((16.0, 16.0), vec![right]), 0.8);
        let (w, h) = grid_l.dims();
        for iy in 0..h {
            for ix in 0..w {
                assert_eq!(grid_l.cell(ix, iy), grid_r.cell(w - 1 - ix, iy));
            }
        }
    }

    #[test]
    fn isolated_cell_inflates_to_chebyshev_disk() {
        let mut grid = OccupancyGrid::new([0.0, 0.0], 1.0, 11, 11);
        grid.set_cell(5, 5, Cell::Occupied);
        grid.inflate_risk(2);
        assert_eq!(
            grid.count(|c| matches!(c, Cell::Risk { .. })),
            24,
            "5x5 minus the center"
        );
        assert_eq!(grid.count(|c| c == Cell::Occupied), 1);
        // Idempotent.
        let snapshot = grid.clone();
        grid.inflate_risk(2);
        assert_eq!(grid, snapshot);
    }

    #[test]
    fn zero_risk_factor_is_a_no_op() {
        let mut grid = OccupancyGrid::new([0.0, 0.0], 1.0, 5, 5);
        grid.set_cell(2, 2, Cell::Occupied);
        grid.inflate_risk(0);
        assert_eq!(grid.count(|c| matches!(c, Cell::Risk { .. })), 0);
    }

    #[test]
    fn straight_corridor_gives_straight_path() {
        let grid = OccupancyGrid::new([0.0, 0.0], 1.0, 12, 3);
        let plan = plan_grid(&grid, Point3::xy(0.5, 1.5), Point3::xy(10.5, 1.5)).unwrap();
        assert_eq!(plan.cells.len(), 11);
        assert!((plan.length_m - 10.0).abs() < 1e-9);
        assert!((plan.cost - 10.0).abs() < 1e-9);
        assert!(plan.cells.iter().all(|(_, y)| *y == 1));
    }

    #[test]
    fn detours_through_free_when_cheaper_than_risk() {
        // 3x3: the middle column has a risk cell in the center row. Crossing
        // it costs 2 + 1 = 3; the diagonal detour costs 2*sqrt(2) ~ 2.83.
        let mut grid = OccupancyGrid::new([0.0, 0.0], 1.0, 3, 3);
        grid.set_cell(1, 1, Cell::Risk { multiplier: 2.0 });
        let plan = plan_grid(&grid, Point3::xy(0.5, 1.5), Point3::xy(2.5, 1.5)).unwrap();
        assert!(
            (plan.cost - 2.0 * 2f64.sqrt()).abs() < 1e-9,
            "hand-computed optimum"
        );
        assert!(!plan.cells.contains(&(1, 1)));
    }

    #[test]
    fn blocked_endpoints_and_unreachable_goals_error() {
        let mut grid = OccupancyGrid::new([0.0, 0.0], 1.0, 5, 5);
        grid.set_cell(0, 0, Cell::Occupied);
        assert!(matches!(
            plan_grid(&grid, Point3::xy(0.5, 0.5), Point3::xy(4.5, 4.5)),
            Err(VpError::BlockedEndpoint { which: "start", .. })
        ));
        // Wall off the right column.
        let mut grid = OccupancyGrid::new([0.0, 0.0], 1.0, 5, 5);
        for y in 0..5 {
            grid.set_cell(3, y, Cell::Occupied);
        }
        assert!(matches!(
            plan_grid(&grid, Point3::xy(0.5, 0.5), Point3::xy(4.5, 4.5)),
            Err(VpError::Unreachable { .. })
        ));
        assert!(matches!(
            plan_grid(&grid, Point3::xy(-3.0, 0.5), Point3::xy(4.5, 4.5)),
            Err(VpError::OutOfGrid { .. })
        ));
    }

    /// Exhaustive relaxation (Bellman-Ford) oracle, independent of the heap
    /// search it checks.
    pub(crate) fn bellman_ford_cost(
        grid: &OccupancyGrid,
        start: (usize, usize),
        goal: (usize, usize),
    ) -> Option<f64> {
        let (w, h) = grid.dims();
        let mut dist = vec![f64::INFINITY; w * h];
        dist[start.1 * w + start.0] = 0.0;
        for _ in 0..w * h {
            let mut changed = false;
            for iy in 0..h {
                for ix in 0..w {
                    let here = dist[iy * w + ix];
                    if here.is_infinite() {
                        continue;
                    }
                    for (dx, dy) in NEIGHBORS {
                        let (nx, ny) = (ix as isize + dx, iy as isize + dy);
                        if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                            continue;
                        }
                        let (nx, ny) = (nx as usize, ny as usize);
                        let Some(m) = grid.cell(nx, ny).multiplier() else {
                            continue;
                        };
                        if !diagonal_allowed(grid, ix, iy, dx, dy) {
                            continue;
                        }
                        let step = grid.cell_size() * ((dx * dx + dy * dy) as f64).sqrt();
                        let cand = here + step * m;
                        if cand < dist[ny * w + nx] {
                            dist[ny * w + nx] = cand;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let d = dist[goal.1 * w + goal.0];
        d.is_finite().then_some(d)
    }

    fn pseudo_random_grid(seed: u64, w: usize, h: usize) -> OccupancyGrid {
        let mut grid = OccupancyGrid::new([0.0, 0.0], 1.0, w, h);
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(3);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for iy in 0..h {
            for ix in 0..w {
                if (ix, iy) == (0, 0) || (ix, iy) == (w - 1, h - 1) {
                    continue;
                }
                match next() % 10 {
                    0 | 1 => grid.set_cell(ix, iy, Cell::Occupied),
                    2 | 3 => grid.set_cell(ix, iy, Cell::Risk { multiplier: 2.0 }),
                    _ => {}
                }
            }
        }
        grid
    }

    #[test]
    fn small_grids_match_exhaustive_relaxation() {
        let mut checked = 0;
        for seed in 0..60u64 {
            let grid = pseudo_random_grid(seed, 6, 6);
            let start = Point3::xy(0.5, 0.5);
            let goal = Point3::xy(5.5, 5.5);
            match plan_grid(&grid, start, goal) {
                Ok(plan) => {
                    let oracle =
                        bellman_ford_cost(&grid, (0, 0), (5, 5)).expect("oracle agrees reachable");
                    assert!(
                        (plan.cost - oracle).abs() < 1e-9,
                        "seed {seed}: planner {} vs oracle {}",
                        plan.cost,
                        oracle
                    );
                }
                Err(VpError::Unreachable { .. }) => {
                    assert!(
                        bellman_ford_cost(&grid, (0, 0), (5, 5)).is_none(),
                        "seed {seed}"
                    );
                }
                Err(e) => panic!("unexpected error: {e}"),
            }
            checked += 1;
        }
        assert_eq!(checked, 60);
    }

    #[test]
    fn ascii_raster_shows_all_three_states() {
        let mut grid = OccupancyGrid::new([0.0, 0.0], 1.0, 3, 2);
        grid.set_cell(1, 0, Cell::Occupied);
        grid.set_cell(2, 0, Cell::Risk { multiplier: 2.0 });
        // Row 0 prints at the bottom.
        assert_eq!(grid.render_ascii(), "...\n.#~\n");
    }

    #[test]
    fn finer_cells_never_add_clearance_violations() {
        // No planned waypoint may fall inside a true footprint, at any
        // resolution: occupied rasterization covers every footprint bit.
        let block = Polygon2::rect(6.0, 5.0, 10.0, 11.0).unwrap();
        let world = scenario((16.0, 16.0), vec![block.clone()]);
        for cell_size in [0.8, 0.4] {
            let mut grid = OccupancyGrid::rasterize(&world, cell_size);
            grid.inflate_risk(2);
            let plan = plan_grid(&grid, Point3::xy(1.0, 8.0), Point3::xy(15.0, 8.0)).unwrap();
            let violations = plan
                .waypoints
                .iter()
                .filter(|p| block.contains(**p))
                .count();
            assert_eq!(violations, 0, "cell size {cell_size}");
        }
    }

    #[test]
    fn path_length_at_least_center_to_center_distance() {
        for seed in 0..20u64 {
            let grid = pseudo_random_grid(seed, 8, 8);
            if let Ok(plan) = plan_grid(&grid, Point3::xy(0.5, 0.5), Point3::xy(7.5, 7.5)) {
                let direct = crate::geometry::euclidean(
                    *plan.waypoints.first().unwrap(),
                    *plan.waypoints.last().unwrap(),
                );
                assert!(plan.length_m >= direct - 1e-9);
            }
        }
    }

    #[test]
    fn risk_never_cheapens_a_route() {
        for seed in 0..20u64 {
            let grid = pseudo_random_grid(seed, 6, 6);
            let mut flat = grid.clone();
            for iy in 0..6 {
                for ix in 0..6 {
                    if matches!(flat.cell(ix, iy), Cell::Risk { .. }) {
                        flat.set_cell(ix, iy, Cell::Free);
                    }
                }
            }
            let start = Point3::xy(0.5, 0.5);
            let goal = Point3::xy(5.5, 5.5);
            if let (Ok(weighted), Ok(unweighted)) =
                (plan_grid(&grid, start, goal), plan_grid(&flat, start, goal))
            {
                assert!(weighted.cost >= unweighted.cost - 1e-9);
            }
        }
    }
}
