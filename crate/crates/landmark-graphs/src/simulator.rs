//! Deterministic grid-world execution of action sequences, used by the
//! goal-distance evaluation. Orientation exists only to interpret turns;
//! scoring never looks at it.

use crate::corpus::{Action, ActionSeq};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Heading {
    N,
    E,
    S,
    W,
}

impl Heading {
    fn left(self) -> Heading {
        match self {
            Heading::N => Heading::W,
            Heading::W => Heading::S,
            Heading::S => Heading::E,
            Heading::E => Heading::N,
        }
    }

    fn right(self) -> Heading {
        match self {
            Heading::N => Heading::E,
            Heading::E => Heading::S,
            Heading::S => Heading::W,
            Heading::W => Heading::N,
        }
    }

    /// Unit step along this heading in (x, y).
    fn delta(self) -> (i64, i64) {
        match self {
            Heading::N => (0, 1),
            Heading::E => (1, 0),
            Heading::S => (0, -1),
            Heading::W => (-1, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pose {
    pub x: i64,
    pub y: i64,
    pub z: i64,
    pub heading: Heading,
}

impl Pose {
    pub fn origin() -> Pose {
        Pose {
            x: 0,
            y: 0,
            z: 0,
            heading: Heading::N,
        }
    }

    pub fn xyz(&self) -> [i64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Execute an action sequence from `start`. `move` behaves as `forward`;
/// `turn` resolves to left or right with probability 1/2 each, drawn from
/// a generator seeded with `rng_seed` (one stream per call).
pub fn execute(actions: &ActionSeq, start: Pose, rng_seed: u64) -> Pose {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut pose = start;
    for &a in actions.actions() {
        step(&mut pose, a, &mut rng);
    }
    pose
}

fn step(pose: &mut Pose, action: Action, rng: &mut ChaCha8Rng) {
    match action {
        Action::Stand | Action::Stop => {}
        Action::Forward | Action::Move => {
            let (dx, dy) = pose.heading.delta();
            pose.x += dx;
            pose.y += dy;
        }
        Action::Left => pose.heading = pose.heading.left(),
        Action::Right => pose.heading = pose.heading.right(),
        Action::Ascend => pose.z += 1,
        Action::Descend => pose.z -= 1,
        Action::Turn => {
            if rng.gen_bool(0.5) {
                pose.heading = pose.heading.left();
            } else {
                pose.heading = pose.heading.right();
            }
        }
    }
}

pub fn euclidean(a: [i64; 3], b: [i64; 3]) -> f64 {
    let dx = (a[0] - b[0]) as f64;
    let dy = (a[1] - b[1]) as f64;
    let dz = (a[2] - b[2]) as f64;
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// 3-D Euclidean distance between the endpoints of `pred` and `gold`, both
/// executed from the canonical start (origin, heading N). Each execution
/// draws its turn resolutions from its own stream seeded with `seed`.
pub fn goal_distance(pred: &ActionSeq, gold: &ActionSeq, seed: u64) -> f64 {
    let p = execute(pred, Pose::origin(), seed);
    let g = execute(gold, Pose::origin(), seed);
    euclidean(p.xyz(), g.xyz())
}

/// Distance from the endpoint of `pred`, executed from `start`, to a known
/// goal coordinate. Used when the corpus carries gold coordinates; the gold
/// sequence is never executed in that case.
pub fn goal_distance_to(pred: &ActionSeq, start: Pose, goal: [i64; 3], seed: u64) -> f64 {
    let p = execute(pred, start, seed);
    euclidean(p.xyz(), goal)
}
