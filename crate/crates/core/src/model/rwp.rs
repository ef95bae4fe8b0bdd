//! Random waypoint agents on a toroidal square.
//!
//! Agents walk at constant speed towards a uniformly drawn waypoint and draw
//! a new one on arrival, with no pause. Each step every agent with
//! probability `pi` broadcasts one interaction to every other agent within
//! `range`.
//!
//! Every LP keeps a full replica of all agent positions and advances it
//! itself; positions depend only on the seed, the agent and the step. The
//! replica stands in for a proximity service and generates no traffic.

use bytes::Bytes;
use rand::Rng;

use crate::domain::{EntityId, EntityRecord, ModelState, Timestep};
use crate::model::{filler_payload, Emission, Model, WORD_EMITTED};
use crate::rng::{EntityRngs, Purpose};

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct RwpConfig {
    pub num_entities: usize,
    pub area_side: f64,
    pub speed: f64,
    pub range: f64,
    pub pi: f64,
    pub interaction_size: usize,
    pub migration_pad: usize,
    pub seed: u64,
}

impl RwpConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.pi) {
            return Err(format!("pi must lie in [0, 1], got {}", self.pi));
        }
        if !(self.area_side > 0.0) || !self.area_side.is_finite() {
            return Err(format!(
                "area side must be positive, got {}",
                self.area_side
            ));
        }
        if !(self.range > 0.0) || self.range >= self.area_side / 2.0 {
            return Err(format!(
                "range must be positive and below half the area side, got {}",
                self.range
            ));
        }
        if !(self.speed >= 0.0) || !self.speed.is_finite() {
            return Err(format!("speed must be non-negative, got {}", self.speed));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub position: Point,
    pub waypoint: Point,
}

impl From<AgentState> for ModelState {
    fn from(a: AgentState) -> ModelState {
        ModelState([a.position[0], a.position[1], a.waypoint[0], a.waypoint[1]])
    }
}

impl From<ModelState> for AgentState {
    fn from(m: ModelState) -> AgentState {
        AgentState {
            position: [m.0[0], m.0[1]],
            waypoint: [m.0[2], m.0[3]],
        }
    }
}

fn axis_gap(a: f64, b: f64, side: f64) -> f64 {
    let d = (a - b).abs();
    d.min(side - d)
}

/// Euclidean distance with wraparound on both axes.
pub fn toroidal_distance(a: Point, b: Point, side: f64) -> f64 {
    axis_gap(a[0], b[0], side).hypot(axis_gap(a[1], b[1], side))
}

fn random_point<R: Rng + ?Sized>(side: f64, rng: &mut R) -> Point {
    [rng.gen_range(0.0..side), rng.gen_range(0.0..side)]
}

/// Moves the agent `speed` units along the straight segment to its
/// waypoint, drawing new waypoints as it reaches them.
pub fn rwp_step<R: Rng + ?Sized>(agent: &mut AgentState, speed: f64, side: f64, rng: &mut R) {
    let mut budget = speed;
    // Waypoints are uniform over the area, so more than a handful of
    // arrivals in one step only happens with absurd speeds.
    for _ in 0..64 {
        let dx = agent.waypoint[0] - agent.position[0];
        let dy = agent.waypoint[1] - agent.position[1];
        let dist = dx.hypot(dy);
        if dist > budget {
            agent.position[0] += dx / dist * budget;
            agent.position[1] += dy / dist * budget;
            break;
        }
        agent.position = agent.waypoint;
        budget -= dist;
        agent.waypoint = random_point(side, rng);
        if budget <= 0.0 {
            break;
        }
    }
    agent.position = [
        agent.position[0].rem_euclid(side),
        agent.position[1].rem_euclid(side),
    ];
}

/// Uniform bucket grid over the torus with cells at least `range` wide.
#[derive(Debug, Clone, Default)]
pub struct NeighborGrid {
    side: f64,
    cells_per_axis: usize,
    cell_width: f64,
    /// `starts[c]..starts[c + 1]` indexes the members of cell `c` in `members`.
    starts: Vec<u32>,
    members: Vec<u32>,
}

impl NeighborGrid {
    pub fn build(positions: &[Point], side: f64, range: f64) -> NeighborGrid {
        let mut grid = NeighborGrid::default();
        grid.rebuild(positions, side, range);
        grid
    }

    pub fn rebuild(&mut self, positions: &[Point], side: f64, range: f64) {
        let per_axis = ((side / range).floor() as usize).max(1);
        self.side = side;
        self.cells_per_axis = per_axis;
        self.cell_width = side / per_axis as f64;
        self.starts.clear();
        self.starts.resize(per_axis * per_axis + 1, 0);
        for p in positions {
            let c = self.cell_of(*p);
            self.starts[c + 1] += 1;
        }
        for c in 1..self.starts.len() {
            self.starts[c] += self.starts[c - 1];
        }
        self.members.clear();
        self.members.resize(positions.len(), 0);
        let mut fill = self.starts.clone();
        for (i, p) in positions.iter().enumerate() {
            let c = self.cell_of(*p);
            self.members[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
    }

    fn axis_cell(&self, v: f64) -> usize {
        ((v / self.cell_width) as usize).min(self.cells_per_axis - 1)
    }

    fn cell_of(&self, p: Point) -> usize {
        self.axis_cell(p[1]) * self.cells_per_axis + self.axis_cell(p[0])
    }

    /// Ids of every other agent within `range` of `entity`, ascending.
    pub fn neighbors_within(
        &self,
        positions: &[Point],
        entity: EntityId,
        range: f64,
        out: &mut Vec<EntityId>,
    ) {
        out.clear();
        let me = positions[entity.index()];
        let n = self.cells_per_axis;
        let (cx, cy) = (self.axis_cell(me[0]), self.axis_cell(me[1]));
        let span: &[usize] = if n >= 3 {
            &[n - 1, 0, 1]
        } else if n == 2 {
            &[0, 1]
        } else {
            &[0]
        };
        for &oy in span {
            for &ox in span {
                let cell = ((cy + oy) % n) * n + (cx + ox) % n;
                let (lo, hi) = (self.starts[cell] as usize, self.starts[cell + 1] as usize);
                for &other in &self.members[lo..hi] {
                    if other as usize != entity.index()
                        && toroidal_distance(me, positions[other as usize], self.side) <= range
                    {
                        out.push(EntityId(u64::from(other)));
                    }
                }
            }
        }
        out.sort_unstable();
    }
}

/// The random waypoint benchmark.
#[derive(Debug, Clone)]
pub struct RandomWaypoint {
    cfg: RwpConfig,
    rngs: EntityRngs,
    agents: Vec<AgentState>,
    positions: Vec<Point>,
    grid: NeighborGrid,
    payload: Bytes,
    scratch: Vec<EntityId>,
}

impl RandomWaypoint {
    pub fn new(cfg: RwpConfig) -> Result<RandomWaypoint, String> {
        cfg.validate()?;
        let rngs = EntityRngs::new(cfg.seed);
        let agents: Vec<AgentState> = (0..cfg.num_entities as u64)
            .map(|e| {
                let mut rng = rngs.stream(EntityId(e), Timestep::ZERO, Purpose::Init);
                AgentState {
                    position: random_point(cfg.area_side, &mut rng),
                    waypoint: random_point(cfg.area_side, &mut rng),
                }
            })
            .collect();
        let positions = agents.iter().map(|a| a.position).collect();
        Ok(RandomWaypoint {
            payload: filler_payload(cfg.interaction_size),
            cfg,
            rngs,
            agents,
            positions,
            grid: NeighborGrid::default(),
            scratch: Vec::new(),
        })
    }

    pub fn config(&self) -> &RwpConfig {
        &self.cfg
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }
}

impl Model for RandomWaypoint {
    fn num_entities(&self) -> usize {
        self.cfg.num_entities
    }

    fn migration_pad(&self) -> usize {
        self.cfg.migration_pad
    }

    fn payload(&self) -> Bytes {
        self.payload.clone()
    }

    fn initial_state(&self, entity: EntityId) -> ModelState {
        self.agents[entity.index()].into()
    }

    fn begin_step(&mut self, now: Timestep) {
        for (i, agent) in self.agents.iter_mut().enumerate() {
            let mut rng = self.rngs.lazy(EntityId(i as u64), now, Purpose::Move);
            rwp_step(agent, self.cfg.speed, self.cfg.area_side, &mut rng);
            self.positions[i] = agent.position;
        }
        self.grid
            .rebuild(&self.positions, self.cfg.area_side, self.cfg.range);
    }

    fn act(&mut self, rec: &mut EntityRecord, now: Timestep, out: &mut Vec<Emission>) {
        rec.model_state = self.agents[rec.id.index()].into();
        let roll: f64 = self.rngs.stream(rec.id, now, Purpose::Emit).gen();
        if roll >= self.cfg.pi {
            return;
        }
        self.grid
            .neighbors_within(&self.positions, rec.id, self.cfg.range, &mut self.scratch);
        out.extend(self.scratch.iter().map(|&dest| Emission { dest, delay: 1 }));
        let sent = rec.state.word(WORD_EMITTED) + self.scratch.len() as u64;
        rec.state.set_word(WORD_EMITTED, sent);
    }
}
