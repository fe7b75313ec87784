//! Spatial experiment generation: user placement over a rectangular service
//! area, a trajectory modeling a user that moves in time, and a random
//! anchor subset.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::{streams, Rng};

/// Parametric trajectory description. The path starts at `start`, takes
/// `num_points - 1` steps of exactly `step_length` meters, and steers by a
/// sinusoidally varying heading, which produces a smooth serpentine curve
/// (`turn_amplitude = 0` gives a straight line).
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryConfig {
    pub start: [f64; 2],
    /// Initial heading in radians, measured from the +x axis.
    pub heading: f64,
    pub step_length: f64,
    pub num_points: usize,
    /// Peak heading deviation in radians.
    pub turn_amplitude: f64,
    /// Heading oscillation period, in steps.
    pub turn_period: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        TrajectoryConfig {
            start: [150.0, 120.0],
            heading: 0.35,
            step_length: 5.0,
            num_points: 60,
            turn_amplitude: 1.0,
            turn_period: 36.0,
        }
    }
}

/// Scenario description: service area, base-station position, user count,
/// optional trajectory, anchor fraction, and the seed all placement
/// randomness derives from.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub area_x_min: f64,
    pub area_x_max: f64,
    pub area_y_min: f64,
    pub area_y_max: f64,
    pub bs_position: [f64; 3],
    pub user_height: f64,
    pub num_users: usize,
    pub trajectory: Option<TrajectoryConfig>,
    pub anchor_fraction: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            area_x_min: 0.0,
            area_x_max: 1000.0,
            area_y_min: 0.0,
            area_y_max: 500.0,
            bs_position: [0.0, 0.0, 10.0],
            user_height: 1.5,
            num_users: 2048,
            trajectory: Some(TrajectoryConfig::default()),
            anchor_fraction: 0.10,
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 {
            return Err(Error::Scenario("num_users must be at least 1".into()));
        }
        if !(self.area_x_min < self.area_x_max && self.area_y_min < self.area_y_max) {
            return Err(Error::Scenario("area extents are empty".into()));
        }
        if !(0.0..=1.0).contains(&self.anchor_fraction) {
            return Err(Error::Scenario(format!(
                "anchor_fraction {} outside [0, 1]",
                self.anchor_fraction
            )));
        }
        if let Some(t) = &self.trajectory {
            if t.num_points < 2 {
                return Err(Error::Scenario("trajectory needs at least 2 points".into()));
            }
            if t.step_length <= 0.0 {
                return Err(Error::Scenario("trajectory step_length must be positive".into()));
            }
            if t.turn_period <= 0.0 {
                return Err(Error::Scenario("trajectory turn_period must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.area_x_min && x <= self.area_x_max && y >= self.area_y_min && y <= self.area_y_max
    }

    pub fn area_diagonal(&self) -> f64 {
        let dx = self.area_x_max - self.area_x_min;
        let dy = self.area_y_max - self.area_y_min;
        (dx * dx + dy * dy).sqrt()
    }
}

/// Generated user placement. Trajectory points occupy the leading indices
/// in time order; anchors are a duplicate-free subset of all indices.
#[derive(Clone, Debug, PartialEq)]
pub struct UePlacement {
    pub positions: Vec<[f64; 3]>,
    pub trajectory_indices: Vec<usize>,
    pub anchor_indices: Vec<usize>,
}

impl UePlacement {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn is_anchor(&self, idx: usize) -> bool {
        self.anchor_indices.binary_search(&idx).is_ok()
    }

    /// Position of `idx` inside the trajectory, or -1 if it is not on it.
    pub fn traj_order(&self, idx: usize) -> i64 {
        self.trajectory_indices
            .iter()
            .position(|&t| t == idx)
            .map(|p| p as i64)
            .unwrap_or(-1)
    }
}

/// Generates the ordered trajectory points for `config.trajectory`.
/// Consecutive points are exactly `step_length` apart.
pub fn generate_trajectory(config: &ScenarioConfig) -> Result<Vec<[f64; 3]>> {
    config.validate()?;
    let traj = config
        .trajectory
        .as_ref()
        .ok_or_else(|| Error::Scenario("no trajectory configured".into()))?;

    let mut points = Vec::with_capacity(traj.num_points);
    let mut x = traj.start[0];
    let mut y = traj.start[1];
    points.push([x, y, config.user_height]);
    for k in 0..traj.num_points - 1 {
        let phase = 2.0 * std::f64::consts::PI * k as f64 / traj.turn_period;
        let heading = traj.heading + traj.turn_amplitude * phase.sin();
        x += traj.step_length * heading.cos();
        y += traj.step_length * heading.sin();
        points.push([x, y, config.user_height]);
    }
    for (i, p) in points.iter().enumerate() {
        if !config.contains(p[0], p[1]) {
            return Err(Error::TrajectoryOutOfArea { index: i, x: p[0], y: p[1] });
        }
    }
    Ok(points)
}

/// Generates the full placement: trajectory points first (in order), then
/// uniform draws over the area, plus the anchor subset. Deterministic for a
/// given `config.seed`.
pub fn generate_placement(config: &ScenarioConfig) -> Result<UePlacement> {
    config.validate()?;

    let trajectory = match &config.trajectory {
        Some(_) => generate_trajectory(config)?,
        None => Vec::new(),
    };
    if trajectory.len() > config.num_users {
        return Err(Error::TrajectoryTooLong {
            trajectory: trajectory.len(),
            num_users: config.num_users,
        });
    }

    let mut positions = trajectory.clone();
    let mut rng = Rng::derive(config.seed, streams::PLACEMENT);
    for _ in trajectory.len()..config.num_users {
        let x = rng.uniform(config.area_x_min, config.area_x_max);
        let y = rng.uniform(config.area_y_min, config.area_y_max);
        positions.push([x, y, config.user_height]);
    }

    let mut placement = UePlacement {
        positions,
        trajectory_indices: (0..trajectory.len()).collect(),
        anchor_indices: Vec::new(),
    };
    placement.anchor_indices = select_anchors(&placement, config.anchor_fraction, config.seed)?;
    Ok(placement)
}

/// Draws `floor(fraction * N)` distinct anchor indices uniformly without
/// replacement. Deterministic for a given seed; returned sorted.
pub fn select_anchors(placement: &UePlacement, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Scenario(format!("anchor fraction {fraction} outside [0, 1]")));
    }
    let n = placement.len();
    let k = (fraction * n as f64).floor() as usize;
    let mut rng = Rng::derive(seed, streams::ANCHORS);
    Ok(rng.sample_indices(n, k))
}

/// Writes `positions.csv`: `id,x,y,z,is_anchor,traj_order`.
pub fn write_positions_csv(placement: &UePlacement, path: &Path) -> Result<()> {
    let mut out = String::from("id,x,y,z,is_anchor,traj_order\n");
    for (i, p) in placement.positions.iter().enumerate() {
        let anchor = if placement.is_anchor(i) { 1 } else { 0 };
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            i,
            p[0],
            p[1],
            p[2],
            anchor,
            placement.traj_order(i)
        ));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a `positions.csv` written by [`write_positions_csv`].
pub fn read_positions_csv(path: &Path) -> Result<UePlacement> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(f);
    let mut positions = Vec::new();
    let mut anchors = Vec::new();
    let mut traj: Vec<(i64, usize)> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if lineno == 0 {
            if line.trim() != "id,x,y,z,is_anchor,traj_order" {
                return Err(Error::format(path, "unexpected positions.csv header"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::format(path, format!("line {}: expected 6 fields", lineno + 1)));
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|_| Error::format(path, format!("line {}: bad number '{s}'", lineno + 1)))
        };
        let id: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| Error::format(path, format!("line {}: bad id", lineno + 1)))?;
        if id != positions.len() {
            return Err(Error::format(path, format!("line {}: ids must be dense", lineno + 1)));
        }
        positions.push([parse(fields[1])?, parse(fields[2])?, parse(fields[3])?]);
        if fields[4].trim() == "1" {
            anchors.push(id);
        }
        let order: i64 = fields[5]
            .trim()
            .parse()
            .map_err(|_| Error::format(path, format!("line {}: bad traj_order", lineno + 1)))?;
        if order >= 0 {
            traj.push((order, id));
        }
    }
    traj.sort_unstable();
    Ok(UePlacement {
        positions,
        trajectory_indices: traj.into_iter().map(|(_, id)| id).collect(),
        anchor_indices: anchors,
    })
}
