//! Colored-keys DoorKey gridworld.
//!
//! A 5x5 room split by a wall with a locked door. The agent has to pick up the
//! key, open the door and walk to the goal. Domains differ only in the color of
//! the key and door. Layout sampling, movement, the egocentric view and the
//! occlusion rule follow MiniGrid's `DoorKey` environment so observations use
//! the same integer codes.

use std::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

pub const GRID_SIZE: usize = 5;
pub const VIEW_SIZE: usize = 5;
pub const HORIZON: u32 = 250;
pub const NUM_ACTIONS: usize = 7;

pub const TYPE_UNSEEN: u8 = 0;
pub const TYPE_EMPTY: u8 = 1;
pub const TYPE_WALL: u8 = 2;
pub const TYPE_DOOR: u8 = 4;
pub const TYPE_KEY: u8 = 5;
pub const TYPE_GOAL: u8 = 8;

/// Number of distinct codes per observation channel (type, color, state).
pub const TYPE_CODES: usize = 9;
pub const COLOR_CODES: usize = 6;
pub const STATE_CODES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red = 0,
    Green = 1,
    Blue = 2,
    Purple = 3,
    Yellow = 4,
    Grey = 5,
}

impl Color {
    pub const ALL: [Color; 6] = [
        Color::Red,
        Color::Green,
        Color::Blue,
        Color::Purple,
        Color::Yellow,
        Color::Grey,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Self::ALL
            .get(code as usize)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("unknown color code {code}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Purple => "purple",
            Color::Yellow => "yellow",
            Color::Grey => "grey",
        }
    }
}

impl std::str::FromStr for Color {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown color {s:?}")))
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DoorState {
    Open = 0,
    Closed = 1,
    Locked = 2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Tile {
    Empty,
    Wall,
    Door { color: Color, state: DoorState },
    Key { color: Color },
    Goal,
}

impl Tile {
    pub fn encode(self) -> Cell {
        match self {
            Tile::Empty => Cell::new(TYPE_EMPTY, 0, 0),
            Tile::Wall => Cell::new(TYPE_WALL, Color::Grey.code(), 0),
            Tile::Door { color, state } => Cell::new(TYPE_DOOR, color.code(), state as u8),
            Tile::Key { color } => Cell::new(TYPE_KEY, color.code(), 0),
            Tile::Goal => Cell::new(TYPE_GOAL, Color::Green.code(), 0),
        }
    }

    fn can_overlap(self) -> bool {
        matches!(
            self,
            Tile::Empty
                | Tile::Goal
                | Tile::Door {
                    state: DoorState::Open,
                    ..
                }
        )
    }

    fn see_behind(self) -> bool {
        match self {
            Tile::Wall => false,
            Tile::Door { state, .. } => state == DoorState::Open,
            _ => true,
        }
    }
}

/// Encoded cell: `(type, color, state)` codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Cell {
    pub type_id: u8,
    pub color_id: u8,
    pub state_id: u8,
}

impl Cell {
    pub const UNSEEN: Cell = Cell::new(TYPE_UNSEEN, 0, 0);

    pub const fn new(type_id: u8, color_id: u8, state_id: u8) -> Self {
        Self {
            type_id,
            color_id,
            state_id,
        }
    }

    pub fn is_valid(self) -> bool {
        matches!(
            self.type_id,
            TYPE_UNSEEN | TYPE_EMPTY | TYPE_WALL | TYPE_DOOR | TYPE_KEY | TYPE_GOAL
        ) && (self.color_id as usize) < COLOR_CODES
            && (self.state_id as usize) < STATE_CODES
            && (self.type_id == TYPE_DOOR || self.state_id == 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    TurnLeft = 0,
    TurnRight = 1,
    Forward = 2,
    Pickup = 3,
    Drop = 4,
    Toggle = 5,
    Done = 6,
}

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [
        Action::TurnLeft,
        Action::TurnRight,
        Action::Forward,
        Action::Pickup,
        Action::Drop,
        Action::Toggle,
        Action::Done,
    ];

    pub fn from_code(code: usize) -> Result<Self> {
        Self::ALL
            .get(code)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("action code {code} out of range")))
    }

    pub fn code(self) -> usize {
        self as usize
    }
}

/// Heading: 0 east, 1 south, 2 west, 3 north (y grows downwards).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Direction(u8);

impl Direction {
    pub fn new(code: u8) -> Result<Self> {
        if code < 4 {
            Ok(Self(code))
        } else {
            Err(Error::InvalidArgument(format!("direction {code} out of range")))
        }
    }

    pub fn code(self) -> u8 {
        self.0
    }

    pub fn left(self) -> Self {
        Self((self.0 + 3) % 4)
    }

    pub fn right(self) -> Self {
        Self((self.0 + 1) % 4)
    }

    pub fn forward_vec(self) -> (i32, i32) {
        match self.0 {
            0 => (1, 0),
            1 => (0, 1),
            2 => (-1, 0),
            _ => (0, -1),
        }
    }

    fn right_vec(self) -> (i32, i32) {
        let (dx, dy) = self.forward_vec();
        (-dy, dx)
    }
}

/// Egocentric view indexed `[row][col]`. The agent sits at row 4, col 2,
/// facing towards row 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Observation(pub [[Cell; VIEW_SIZE]; VIEW_SIZE]);

impl Observation {
    pub fn get(&self, row: usize, col: usize) -> Cell {
        self.0[row][col]
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.0.iter().flat_map(|r| r.iter().copied())
    }

    /// The same view with key and door colors `from` repainted `to`.
    pub fn recolor(&self, from: Color, to: Color) -> Self {
        let mut out = *self;
        for cell in out.0.iter_mut().flatten() {
            if matches!(cell.type_id, TYPE_DOOR | TYPE_KEY) && cell.color_id == from.code() {
                cell.color_id = to.code();
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridEnv {
    tiles: [[Tile; GRID_SIZE]; GRID_SIZE],
    agent_pos: (usize, usize),
    agent_dir: Direction,
    carrying: Option<Tile>,
    t: u32,
    done: bool,
    domain_color: Color,
    seed: u64,
}

/// Samples a DoorKey layout. The layout depends only on `seed`; `color` only
/// paints the key and door.
pub fn generate_env(color: Color, seed: u64) -> GridEnv {
    let mut rng = rng_from_seed(seed);
    let mut tiles = [[Tile::Empty; GRID_SIZE]; GRID_SIZE];
    for i in 0..GRID_SIZE {
        tiles[0][i] = Tile::Wall;
        tiles[GRID_SIZE - 1][i] = Tile::Wall;
        tiles[i][0] = Tile::Wall;
        tiles[i][GRID_SIZE - 1] = Tile::Wall;
    }
    // tiles[y][x]
    tiles[GRID_SIZE - 2][GRID_SIZE - 2] = Tile::Goal;
    let split = rng.random_range(2..GRID_SIZE - 2);
    for row in tiles.iter_mut() {
        row[split] = Tile::Wall;
    }

    let free_left = |rng: &mut crate::rng::Rng, tiles: &[[Tile; GRID_SIZE]; GRID_SIZE]| loop {
        let x = rng.random_range(0..split);
        let y = rng.random_range(0..GRID_SIZE);
        if tiles[y][x] == Tile::Empty {
            return (x, y);
        }
    };
    let agent_pos = free_left(&mut rng, &tiles);
    let agent_dir = Direction(rng.random_range(0..4));
    let door_row = rng.random_range(1..GRID_SIZE - 2);
    tiles[door_row][split] = Tile::Door {
        color,
        state: DoorState::Locked,
    };
    let key_pos = loop {
        let p = free_left(&mut rng, &tiles);
        if p != agent_pos {
            break p;
        }
    };
    tiles[key_pos.1][key_pos.0] = Tile::Key { color };

    GridEnv {
        tiles,
        agent_pos,
        agent_dir,
        carrying: None,
        t: 0,
        done: false,
        domain_color: color,
        seed,
    }
}

impl GridEnv {
    pub fn tile(&self, x: usize, y: usize) -> Tile {
        self.tiles[y][x]
    }

    pub fn agent_pos(&self) -> (usize, usize) {
        self.agent_pos
    }

    pub fn agent_dir(&self) -> Direction {
        self.agent_dir
    }

    pub fn carrying(&self) -> Option<Tile> {
        self.carrying
    }

    pub fn t(&self) -> u32 {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn domain_color(&self) -> Color {
        self.domain_color
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn front(&self) -> Option<(usize, usize)> {
        let (dx, dy) = self.agent_dir.forward_vec();
        let x = self.agent_pos.0 as i32 + dx;
        let y = self.agent_pos.1 as i32 + dy;
        in_grid(x, y)
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        self.t += 1;
        let mut reward = 0.0;
        let front = self.front();
        match action {
            Action::TurnLeft => self.agent_dir = self.agent_dir.left(),
            Action::TurnRight => self.agent_dir = self.agent_dir.right(),
            Action::Forward => {
                if let Some((x, y)) = front {
                    let tile = self.tiles[y][x];
                    if tile.can_overlap() {
                        self.agent_pos = (x, y);
                    }
                    if tile == Tile::Goal {
                        self.done = true;
                        reward = 1.0 - 0.9 * (self.t as f64 / HORIZON as f64);
                    }
                }
            }
            Action::Pickup => {
                if let Some((x, y)) = front {
                    if let (Tile::Key { .. }, None) = (self.tiles[y][x], self.carrying) {
                        self.carrying = Some(self.tiles[y][x]);
                        self.tiles[y][x] = Tile::Empty;
                    }
                }
            }
            Action::Drop => {
                if let (Some((x, y)), Some(held)) = (front, self.carrying) {
                    if self.tiles[y][x] == Tile::Empty {
                        self.tiles[y][x] = held;
                        self.carrying = None;
                    }
                }
            }
            Action::Toggle => {
                if let Some((x, y)) = front {
                    if let Tile::Door { color, state } = self.tiles[y][x] {
                        let next = match state {
                            DoorState::Locked => match self.carrying {
                                Some(Tile::Key { color: k }) if k == color => DoorState::Open,
                                _ => DoorState::Locked,
                            },
                            DoorState::Closed => DoorState::Open,
                            DoorState::Open => DoorState::Closed,
                        };
                        self.tiles[y][x] = Tile::Door { color, state: next };
                    }
                }
            }
            Action::Done => {}
        }
        if self.t >= HORIZON {
            self.done = true;
        }
        Ok(StepOutcome {
            observation: encode_observation(self),
            reward,
            done: self.done,
        })
    }

    pub fn dump(&self) -> GridDump {
        let mut cells = Vec::with_capacity(GRID_SIZE * GRID_SIZE);
        for y in 0..GRID_SIZE {
            for x in 0..GRID_SIZE {
                let c = self.tiles[y][x].encode();
                cells.push(CellRecord {
                    x,
                    y,
                    type_id: c.type_id,
                    color_id: c.color_id,
                    state_id: c.state_id,
                });
            }
        }
        GridDump {
            width: GRID_SIZE,
            height: GRID_SIZE,
            seed: self.seed,
            domain_color: self.domain_color,
            agent: AgentPose {
                x: self.agent_pos.0,
                y: self.agent_pos.1,
                dir: self.agent_dir.code(),
            },
            carrying: self.carrying.map(Tile::encode),
            t: self.t,
            done: self.done,
            cells,
        }
    }
}

fn in_grid(x: i32, y: i32) -> Option<(usize, usize)> {
    let n = GRID_SIZE as i32;
    ((0..n).contains(&x) && (0..n).contains(&y)).then_some((x as usize, y as usize))
}

/// 5x5 view ahead of the agent. Cells outside the grid read as walls and
/// cells hidden behind walls or closed doors read as unseen.
pub fn encode_observation(env: &GridEnv) -> Observation {
    let (fx, fy) = env.agent_dir.forward_vec();
    let (rx, ry) = env.agent_dir.right_vec();
    let (ax, ay) = (env.agent_pos.0 as i32, env.agent_pos.1 as i32);
    let agent_col = VIEW_SIZE / 2;
    let agent_row = VIEW_SIZE - 1;

    // view[col][row] to mirror the scan order of the visibility sweep
    let mut view = [[Tile::Empty; VIEW_SIZE]; VIEW_SIZE];
    for (col, column) in view.iter_mut().enumerate() {
        for (row, slot) in column.iter_mut().enumerate() {
            let ahead = (agent_row - row) as i32;
            let side = col as i32 - agent_col as i32;
            let x = ax + fx * ahead + rx * side;
            let y = ay + fy * ahead + ry * side;
            *slot = match in_grid(x, y) {
                Some((x, y)) => env.tiles[y][x],
                None => Tile::Wall,
            };
        }
    }
    // The agent's own cell is drawn empty even when carrying.
    view[agent_col][agent_row] = Tile::Empty;

    let mask = visibility(&view, agent_col, agent_row);
    let mut out = [[Cell::UNSEEN; VIEW_SIZE]; VIEW_SIZE];
    for col in 0..VIEW_SIZE {
        for row in 0..VIEW_SIZE {
            if mask[col][row] {
                out[row][col] = view[col][row].encode();
            }
        }
    }
    Observation(out)
}

/// MiniGrid's `process_vis` sweep: propagates visibility from the agent
/// upward and sideways through cells that can be seen through.
fn visibility(view: &[[Tile; VIEW_SIZE]; VIEW_SIZE], agent_col: usize, agent_row: usize) -> [[bool; VIEW_SIZE]; VIEW_SIZE] {
    let mut mask = [[false; VIEW_SIZE]; VIEW_SIZE];
    mask[agent_col][agent_row] = true;
    for j in (0..VIEW_SIZE).rev() {
        for i in 0..VIEW_SIZE - 1 {
            if !mask[i][j] || !view[i][j].see_behind() {
                continue;
            }
            mask[i + 1][j] = true;
            if j > 0 {
                mask[i + 1][j - 1] = true;
                mask[i][j - 1] = true;
            }
        }
        for i in (1..VIEW_SIZE).rev() {
            if !mask[i][j] || !view[i][j].see_behind() {
                continue;
            }
            mask[i - 1][j] = true;
            if j > 0 {
                mask[i - 1][j - 1] = true;
                mask[i][j - 1] = true;
            }
        }
    }
    mask
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentPose {
    pub x: usize,
    pub y: usize,
    pub dir: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRecord {
    pub x: usize,
    pub y: usize,
    #[serde(rename = "type")]
    pub type_id: u8,
    #[serde(rename = "color")]
    pub color_id: u8,
    #[serde(rename = "state")]
    pub state_id: u8,
}

/// JSON dump of an environment: one record per cell plus the agent pose.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridDump {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub domain_color: Color,
    pub agent: AgentPose,
    pub carrying: Option<Cell>,
    pub t: u32,
    pub done: bool,
    pub cells: Vec<CellRecord>,
}

impl fmt::Display for GridEnv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for y in 0..GRID_SIZE {
            for x in 0..GRID_SIZE {
                let ch = if (x, y) == self.agent_pos {
                    ['>', 'v', '<', '^'][self.agent_dir.code() as usize]
                } else {
                    match self.tiles[y][x] {
                        Tile::Empty => '.',
                        Tile::Wall => '#',
                        Tile::Door {
                            state: DoorState::Open,
                            ..
                        } => '/',
                        Tile::Door { .. } => 'D',
                        Tile::Key { .. } => 'K',
                        Tile::Goal => 'G',
                    }
                };
                write!(f, "{ch}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(env: &GridEnv, pred: impl Fn(Tile) -> bool) -> usize {
        (0..GRID_SIZE)
            .flat_map(|y| (0..GRID_SIZE).map(move |x| (x, y)))
            .filter(|&(x, y)| pred(env.tile(x, y)))
            .count()
    }

    #[test]
    fn layout_has_one_of_each_object() {
        for seed in 0..200 {
            for color in Color::ALL {
                let env = generate_env(color, seed);
                assert_eq!(count(&env, |t| matches!(t, Tile::Key { .. })), 1);
                assert_eq!(count(&env, |t| t == Tile::Goal), 1);
                assert_eq!(
                    count(&env, |t| matches!(t, Tile::Door { state: DoorState::Locked, .. })),
                    1
                );
                assert_eq!(count(&env, |t| t == Tile::Key { color }), 1);
                assert_eq!(count(&env, |t| matches!(t, Tile::Door { color: c, .. } if c == color)), 1);
                assert_eq!(env.tile(3, 3), Tile::Goal);
                assert!(env.agent_pos().0 < 2);
                for i in 0..GRID_SIZE {
                    assert_eq!(env.tile(i, 0), Tile::Wall);
                    assert_eq!(env.tile(0, i), Tile::Wall);
                    assert_eq!(env.tile(i, 4), Tile::Wall);
                    assert_eq!(env.tile(4, i), Tile::Wall);
                }
            }
        }
    }

    #[test]
    fn colors_only_change_color_fields() {
        for seed in 0..50 {
            let red = generate_env(Color::Red, seed).dump();
            let green = generate_env(Color::Green, seed).dump();
            assert_eq!(red.agent, green.agent);
            for (a, b) in red.cells.iter().zip(&green.cells) {
                assert_eq!((a.x, a.y, a.type_id, a.state_id), (b.x, b.y, b.type_id, b.state_id));
                if a.type_id == TYPE_DOOR || a.type_id == TYPE_KEY {
                    assert_eq!((a.color_id, b.color_id), (0, 1));
                } else {
                    assert_eq!(a.color_id, b.color_id);
                }
            }
        }
    }

    #[test]
    fn goal_reward_follows_elapsed_time() {
        let mut env = generate_env(Color::Red, 0);
        env.agent_pos = (3, 2);
        env.agent_dir = Direction(1);
        env.t = 24;
        let out = env.step(Action::Forward).unwrap();
        assert!(out.done);
        assert!((out.reward - 0.91).abs() < 1e-12);
        assert!(matches!(env.step(Action::Done), Err(Error::EpisodeFinished)));
    }

    #[test]
    fn walking_into_a_wall_is_a_no_op() {
        let mut env = generate_env(Color::Blue, 3);
        env.agent_pos = (1, 1);
        env.agent_dir = Direction(3);
        let out = env.step(Action::Forward).unwrap();
        assert_eq!(env.agent_pos(), (1, 1));
        assert_eq!(out.reward, 0.0);
        assert!(!out.done);
    }

    fn face_door(env: &mut GridEnv) -> (usize, usize) {
        let (x, y) = (0..GRID_SIZE)
            .flat_map(|y| (0..GRID_SIZE).map(move |x| (x, y)))
            .find(|&(x, y)| matches!(env.tile(x, y), Tile::Door { .. }))
            .unwrap();
        if env.tiles[y][x - 1] != Tile::Empty {
            env.tiles[y][x - 1] = Tile::Empty;
        }
        env.agent_pos = (x - 1, y);
        env.agent_dir = Direction(0);
        (x, y)
    }

    #[test]
    fn locked_door_needs_the_matching_key() {
        let mut env = generate_env(Color::Purple, 5);
        let (x, y) = face_door(&mut env);
        env.step(Action::Toggle).unwrap();
        assert!(matches!(env.tile(x, y), Tile::Door { state: DoorState::Locked, .. }));

        env.carrying = Some(Tile::Key { color: Color::Yellow });
        env.step(Action::Toggle).unwrap();
        assert!(matches!(env.tile(x, y), Tile::Door { state: DoorState::Locked, .. }));

        env.carrying = Some(Tile::Key { color: Color::Purple });
        env.step(Action::Toggle).unwrap();
        assert!(matches!(env.tile(x, y), Tile::Door { state: DoorState::Open, .. }));
        env.step(Action::Forward).unwrap();
        assert_eq!(env.agent_pos(), (x, y));
    }

    #[test]
    fn pickup_and_drop() {
        let mut env = generate_env(Color::Red, 9);
        let (kx, ky) = (0..GRID_SIZE)
            .flat_map(|y| (0..GRID_SIZE).map(move |x| (x, y)))
            .find(|&(x, y)| matches!(env.tile(x, y), Tile::Key { .. }))
            .unwrap();
        // stand next to the key on its column, facing it
        let (ax, ay, dir) = if ky > 1 && env.tile(kx, ky - 1) == Tile::Empty || (kx, ky - 1) == env.agent_pos {
            (kx, ky - 1, 1)
        } else {
            (kx, ky + 1, 3)
        };
        env.agent_pos = (ax, ay);
        env.agent_dir = Direction(dir);
        env.step(Action::Pickup).unwrap();
        assert_eq!(env.carrying(), Some(Tile::Key { color: Color::Red }));
        assert_eq!(env.tile(kx, ky), Tile::Empty);
        env.step(Action::Drop).unwrap();
        assert_eq!(env.carrying(), None);
        assert_eq!(env.tile(kx, ky), Tile::Key { color: Color::Red });
    }

    #[test]
    fn horizon_ends_the_episode_without_reward() {
        let mut env = generate_env(Color::Green, 1);
        let mut total = 0.0;
        for i in 0..HORIZON {
            let out = env.step(Action::TurnLeft).unwrap();
            total += out.reward;
            assert_eq!(out.done, i + 1 == HORIZON);
        }
        assert_eq!(total, 0.0);
        assert_eq!(env.t(), HORIZON);
    }

    #[test]
    fn view_stops_at_a_wall() {
        let mut env = generate_env(Color::Red, 2);
        env.agent_pos = (1, 1);
        env.agent_dir = Direction(3);
        let obs = encode_observation(&env);
        // wall directly ahead
        assert_eq!(obs.get(3, 2), Tile::Wall.encode());
        for row in 0..3 {
            assert_eq!(obs.get(row, 2), Cell::UNSEEN, "row {row}");
        }
        assert_eq!(obs.get(4, 2), Tile::Empty.encode());
        assert!(obs.cells().all(Cell::is_valid));
    }

    #[test]
    fn grey_key_is_encoded_with_grey_code() {
        let mut seen = false;
        for seed in 0..40 {
            let mut env = generate_env(Color::Grey, seed);
            for _ in 0..4 {
                let obs = env.step(Action::TurnLeft).unwrap().observation;
                seen |= obs.cells().any(|c| c == Cell::new(TYPE_KEY, 5, 0));
            }
        }
        assert!(seen);
    }

    #[test]
    fn four_turns_restore_the_view() {
        for seed in 0..20 {
            let mut env = generate_env(Color::Blue, seed);
            let start = encode_observation(&env);
            let mut last = start;
            for _ in 0..4 {
                last = env.step(Action::TurnRight).unwrap().observation;
            }
            assert_eq!(start, last);
        }
    }

    #[test]
    fn carried_key_is_not_drawn() {
        let mut env = generate_env(Color::Red, 4);
        env.carrying = Some(Tile::Key { color: Color::Red });
        for y in 0..GRID_SIZE {
            for x in 0..GRID_SIZE {
                if matches!(env.tiles[y][x], Tile::Key { .. }) {
                    env.tiles[y][x] = Tile::Empty;
                }
            }
        }
        for _ in 0..4 {
            let obs = env.step(Action::TurnLeft).unwrap().observation;
            assert!(obs.cells().all(|c| c.type_id != TYPE_KEY));
            assert_eq!(obs.get(4, 2), Tile::Empty.encode());
        }
    }

    #[test]
    fn dump_round_trips_through_json() {
        let env = generate_env(Color::Yellow, 11);
        let json = serde_json::to_string(&env.dump()).unwrap();
        let back: GridDump = serde_json::from_str(&json).unwrap();
        assert_eq!(back, env.dump());
        assert_eq!(back.cells.len(), 25);
        assert!(json.contains("\"domain_color\":\"yellow\""));
    }
}
