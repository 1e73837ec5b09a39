//! Slot-level simulator of the decentralised colouring dynamics.
//!
//! Time is divided into slots. In every slot each vertex draws a colour
//! from its private distribution, all vertices sense simultaneously whether
//! a neighbour drew the same colour, and the unsatisfied non-permanent
//! vertices remix their distributions while the satisfied ones lock their
//! colour in and go permanent. A shared reset schedule periodically clears
//! the permanent flags (distributions are kept), which is what lets the
//! process shake off bad partial colourings instead of crawling out of them.
//!
//! Permanent vertices replay their locked colour without consuming any
//! randomness, so a run's draw sequences depend only on `(seed, vertex)`
//! and not on how long other vertices took to settle.
//!
//! Two always-on self-checks run every slot: two vertices permanent at the
//! start of a slot never draw the same colour across an edge, and a fully
//! permanent state is a proper colouring. [`Engine::perturb_random`]
//! deliberately breaks both, so they stay suspended from a perturbation
//! until the next schedule reset.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::graph::{Colouring, Graph};
use crate::seeding::vertex_rng;

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("palette must have at least one colour")]
    EmptyPalette,
    #[error("mixing weight {0} outside (0, 1]")]
    BadB(f64),
    #[error("reset period must be at least 1")]
    ZeroPeriod,
    #[error("explicit reset slots must be positive and nondecreasing")]
    BadExplicitSchedule,
    #[error("start colouring has {got} entries for {want} vertices")]
    StartLength { got: usize, want: usize },
    #[error("start colour {0} outside palette 1..={1}")]
    StartColour(u32, usize),
    #[error("vertex {0} out of range for {1} vertices")]
    VertexOutOfRange(u32, usize),
}

/// When the permanent flags are cleared. Slot indices are the number of
/// completed slots, so `Periodic { period: p }` fires after `p, 2p, …`
/// slots, giving every epoch exactly `p` draw rounds.
#[derive(Debug, Clone, PartialEq)]
pub enum ResetSchedule {
    Periodic { period: u64 },
    /// Explicit nondecreasing completed-slot counts. A repeated entry burns
    /// an extra epoch index at the same instant and is otherwise a no-op.
    Explicit(Vec<u64>),
    Never,
}

impl ResetSchedule {
    /// Smallest epoch index τ ≥ 1 whose reset point lies at or after
    /// `slots` completed slots. None if the schedule runs out first.
    pub fn epochs_covering(&self, slots: u64) -> Option<u64> {
        match self {
            ResetSchedule::Periodic { period } => Some(slots.div_ceil(*period).max(1)),
            ResetSchedule::Explicit(list) => {
                list.iter().position(|&s| s >= slots).map(|i| i as u64 + 1)
            }
            ResetSchedule::Never => None,
        }
    }

    fn validate(&self) -> Result<(), EngineError> {
        match self {
            ResetSchedule::Periodic { period } if *period == 0 => Err(EngineError::ZeroPeriod),
            ResetSchedule::Explicit(list) => {
                let ok = list.iter().all(|&s| s >= 1)
                    && list.windows(2).all(|w| w[0] <= w[1]);
                if ok { Ok(()) } else { Err(EngineError::BadExplicitSchedule) }
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    /// Palette size D; colours are 1..=D.
    pub d: usize,
    /// Mixing weight b: an unsatisfied vertex moves its distribution to
    /// (1−b)·current + b·uniform.
    pub b: f64,
    pub schedule: ResetSchedule,
}

/// Named parameter presets. `config` fills in the degree-dependent pieces
/// from the graph.
#[derive(Debug, Clone, PartialEq)]
pub enum Variant {
    /// Reset every `s_bar` slots, mixing weight `b`.
    Fcfl { s_bar: u64, b: f64 },
    /// Reset every Δ+1 slots, full mixing. The configuration the epoch
    /// bound is stated for.
    SimplifiedFcfl,
    /// Reset every slot: permanence never outlives the slot that granted
    /// it, leaving only the distribution memory.
    Cfl { b: f64 },
    /// [`Variant::Cfl`] with full mixing: satisfied vertices replay their
    /// colour, unsatisfied ones draw fresh uniformly.
    LearningBeb,
    /// Never reset. Converges on paper eventually, but a bad partial
    /// colouring can pin it for a very long time.
    NoReset,
}

impl Variant {
    pub fn config(&self, g: &Graph, d: usize) -> EngineConfig {
        let (schedule, b) = match self {
            Variant::Fcfl { s_bar, b } => (ResetSchedule::Periodic { period: *s_bar }, *b),
            Variant::SimplifiedFcfl => {
                (ResetSchedule::Periodic { period: g.max_degree() as u64 + 1 }, 1.0)
            }
            Variant::Cfl { b } => (ResetSchedule::Periodic { period: 1 }, *b),
            Variant::LearningBeb => (ResetSchedule::Periodic { period: 1 }, 1.0),
            Variant::NoReset => (ResetSchedule::Never, 1.0),
        };
        EngineConfig { d, b, schedule }
    }
}

/// A vertex's colour distribution. `Point` is both the locked state and
/// the survivor of a reset; `Dense` only appears when b < 1, because full
/// mixing maps every unsatisfied distribution straight back to uniform.
#[derive(Debug, Clone, PartialEq)]
pub enum ProbVector {
    Uniform,
    Point(u32),
    Dense(Vec<f64>),
}

impl ProbVector {
    /// Probability of drawing `colour` under palette size `d`.
    pub fn prob(&self, colour: u32, d: usize) -> f64 {
        match self {
            ProbVector::Uniform => 1.0 / d as f64,
            ProbVector::Point(c) => if *c == colour { 1.0 } else { 0.0 },
            ProbVector::Dense(w) => w[colour as usize - 1],
        }
    }
}

/// State of one completed slot: completed-slot count, number of
/// non-permanent vertices after the slot's updates, and whether the slot's
/// drawn colouring was collision-free.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlotRecord {
    pub t: u64,
    #[serde(rename = "Z")]
    pub z: usize,
    pub proper: bool,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConvergenceResult {
    pub converged: bool,
    /// Completed slots when the first collision-free slot happened; equals
    /// the cap when not converged.
    pub slots: u64,
    /// Epochs needed to cover `slots`, per the schedule.
    pub epochs: Option<u64>,
}

/// Same-colour counting state for complete multipartite graphs, where
/// "neighbour drew my colour" reduces to "someone outside my part drew my
/// colour". Touched entries are tracked so each slot clears in O(N).
struct CountSensing {
    global: Vec<u32>,
    by_part: Vec<u32>,
    touched_global: Vec<u32>,
    touched_part: Vec<usize>,
    parts: usize,
}

impl CountSensing {
    fn new(parts: usize, d: usize) -> Self {
        CountSensing {
            global: vec![0; d + 1],
            by_part: vec![0; parts * (d + 1)],
            touched_global: Vec::new(),
            touched_part: Vec::new(),
            parts: parts.max(1),
        }
    }

    fn clear(&mut self) {
        for &c in &self.touched_global {
            self.global[c as usize] = 0;
        }
        for &i in &self.touched_part {
            self.by_part[i] = 0;
        }
        self.touched_global.clear();
        self.touched_part.clear();
        let _ = self.parts;
    }
}

pub struct Engine<'g> {
    g: &'g Graph,
    cfg: EngineConfig,
    p: Vec<ProbVector>,
    m: Vec<bool>,
    rngs: Vec<ChaCha8Rng>,
    t: u64,
    epoch: u64,
    next_explicit: usize,
    draws: Vec<u32>,
    satisfied: Vec<bool>,
    counts: Option<CountSensing>,
    /// Colour a vertex locked this epoch (0 while non-permanent): the
    /// within-epoch stability self-check.
    frozen: Vec<u32>,
    z: usize,
    last_proper: bool,
    /// All vertices permanent with point distributions. From here every
    /// future slot replays the same proper colouring and consumes no
    /// randomness, so stepping reduces to bookkeeping.
    absorbed: bool,
    /// Set by a perturbation, cleared by the next reset: the self-checks
    /// do not apply while a forced collision may be in place.
    checks_suspended: bool,
}

impl<'g> Engine<'g> {
    pub fn new(g: &'g Graph, cfg: EngineConfig, run_seed: u64) -> Result<Self, EngineError> {
        Self::build(g, cfg, run_seed, None)
    }

    /// Start from a given colouring instead of uniform distributions: each
    /// vertex begins non-permanent with a point distribution on its colour.
    pub fn with_start(
        g: &'g Graph,
        cfg: EngineConfig,
        run_seed: u64,
        start: &Colouring,
    ) -> Result<Self, EngineError> {
        Self::build(g, cfg, run_seed, Some(start))
    }

    fn build(
        g: &'g Graph,
        cfg: EngineConfig,
        run_seed: u64,
        start: Option<&Colouring>,
    ) -> Result<Self, EngineError> {
        if cfg.d == 0 {
            return Err(EngineError::EmptyPalette);
        }
        if !(cfg.b > 0.0 && cfg.b <= 1.0) {
            return Err(EngineError::BadB(cfg.b));
        }
        cfg.schedule.validate()?;
        let n = g.n();
        let p = match start {
            None => vec![ProbVector::Uniform; n],
            Some(c) => {
                if c.len() != n {
                    return Err(EngineError::StartLength { got: c.len(), want: n });
                }
                if let Some(&bad) = c.colours().iter().find(|&&x| x == 0 || x as usize > cfg.d) {
                    return Err(EngineError::StartColour(bad, cfg.d));
                }
                c.colours().iter().map(|&x| ProbVector::Point(x)).collect()
            }
        };
        let rngs = (0..n as u32).map(|v| vertex_rng(run_seed, v)).collect();
        let counts = g
            .partition()
            .map(|part| CountSensing::new(part.part_count(), cfg.d));
        Ok(Engine {
            g,
            cfg,
            p,
            m: vec![false; n],
            rngs,
            t: 0,
            epoch: 0,
            next_explicit: 0,
            draws: vec![0; n],
            satisfied: vec![false; n],
            counts,
            frozen: vec![0; n],
            z: n,
            last_proper: false,
            absorbed: false,
            checks_suspended: false,
        })
    }

    pub fn graph(&self) -> &Graph {
        self.g
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    /// Completed slots.
    pub fn t(&self) -> u64 {
        self.t
    }

    /// Resets performed so far.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Non-permanent vertices after the last slot.
    pub fn z(&self) -> usize {
        self.z
    }

    pub fn is_absorbed(&self) -> bool {
        self.absorbed
    }

    pub fn permanent_flags(&self) -> &[bool] {
        &self.m
    }

    /// Colours drawn in the last completed slot (0s before the first).
    pub fn last_draws(&self) -> &[u32] {
        &self.draws
    }

    pub fn prob_vector(&self, v: u32) -> &ProbVector {
        &self.p[v as usize]
    }

    fn reset_due(&self) -> bool {
        match &self.cfg.schedule {
            ResetSchedule::Periodic { period } => self.t > 0 && self.t % period == 0,
            ResetSchedule::Explicit(list) => {
                self.next_explicit < list.len() && list[self.next_explicit] == self.t
            }
            ResetSchedule::Never => false,
        }
    }

    fn apply_reset(&mut self) {
        match &self.cfg.schedule {
            ResetSchedule::Periodic { .. } => self.epoch += 1,
            ResetSchedule::Explicit(list) => {
                // Swallow duplicates: each burns an epoch index.
                while self.next_explicit < list.len() && list[self.next_explicit] == self.t {
                    self.next_explicit += 1;
                    self.epoch += 1;
                }
            }
            ResetSchedule::Never => unreachable!(),
        }
        self.m.iter_mut().for_each(|f| *f = false);
        self.frozen.iter_mut().for_each(|c| *c = 0);
        self.z = self.g.n();
        self.checks_suspended = false;
    }

    /// Run one slot and return its record.
    pub fn step(&mut self) -> SlotRecord {
        if self.absorbed {
            // Resets and re-locks replay deterministically from point
            // distributions without touching any RNG; only the epoch
            // counter needs to move.
            if self.reset_due() {
                match &self.cfg.schedule {
                    ResetSchedule::Periodic { .. } => self.epoch += 1,
                    ResetSchedule::Explicit(list) => {
                        while self.next_explicit < list.len()
                            && list[self.next_explicit] == self.t
                        {
                            self.next_explicit += 1;
                            self.epoch += 1;
                        }
                    }
                    ResetSchedule::Never => {}
                }
            }
            self.t += 1;
            return SlotRecord { t: self.t, z: 0, proper: true };
        }

        // Permanence at slot start, before any reset: the no-collision
        // self-check is against this snapshot, so it also covers the slot
        // in which a reset clears the flags.
        let perm_before: Vec<bool> = self.m.clone();
        let suspended = self.checks_suspended;
        if self.reset_due() {
            self.apply_reset();
        }

        let n = self.g.n();
        let d = self.cfg.d as u32;
        for v in 0..n {
            self.draws[v] = match &self.p[v] {
                ProbVector::Point(c) => *c,
                ProbVector::Uniform => self.rngs[v].gen_range(0..d) + 1,
                ProbVector::Dense(w) => {
                    let u: f64 = self.rngs[v].gen();
                    let mut acc = 0.0;
                    let mut drawn = d;
                    for (i, &wi) in w.iter().enumerate() {
                        acc += wi;
                        if u < acc {
                            drawn = i as u32 + 1;
                            break;
                        }
                    }
                    drawn
                }
            };
        }

        self.sense();

        if !suspended {
            self.assert_no_permanent_collision(&perm_before);
        }
        for v in 0..n {
            // A permanent vertex's draw never moves within an epoch.
            debug_assert!(self.frozen[v] == 0 || self.draws[v] == self.frozen[v]);
        }

        let mut z = 0;
        let mut proper = true;
        for v in 0..n {
            if self.satisfied[v] {
                if !self.m[v] {
                    self.m[v] = true;
                    self.p[v] = ProbVector::Point(self.draws[v]);
                    self.frozen[v] = self.draws[v];
                }
            } else {
                proper = false;
                if !self.m[v] {
                    self.remix(v);
                }
            }
            if !self.m[v] {
                z += 1;
            }
        }
        self.z = z;
        self.last_proper = proper;
        self.t += 1;
        if !suspended {
            // A fully permanent state must be a proper colouring.
            assert!(z > 0 || proper, "all vertices permanent in a colliding state at t={}", self.t);
        }
        self.absorbed = z == 0 && proper;
        SlotRecord { t: self.t, z, proper }
    }

    fn remix(&mut self, v: usize) {
        let b = self.cfg.b;
        let d = self.cfg.d;
        if b == 1.0 {
            self.p[v] = ProbVector::Uniform;
            return;
        }
        let floor = b / d as f64;
        self.p[v] = match &self.p[v] {
            // (1−b)/D + b/D = 1/D: mixing leaves uniform alone.
            ProbVector::Uniform => ProbVector::Uniform,
            ProbVector::Point(c) => {
                let mut w = vec![floor; d];
                w[*c as usize - 1] += 1.0 - b;
                ProbVector::Dense(w)
            }
            ProbVector::Dense(w) => {
                ProbVector::Dense(w.iter().map(|&x| (1.0 - b) * x + floor).collect())
            }
        };
    }

    fn sense(&mut self) {
        let n = self.g.n();
        match (&mut self.counts, self.g.partition()) {
            (Some(cs), Some(part)) => {
                cs.clear();
                let stride = self.cfg.d + 1;
                for v in 0..n {
                    let c = self.draws[v] as usize;
                    if cs.global[c] == 0 {
                        cs.touched_global.push(c as u32);
                    }
                    cs.global[c] += 1;
                    let idx = part.part_of(v as u32) as usize * stride + c;
                    if cs.by_part[idx] == 0 {
                        cs.touched_part.push(idx);
                    }
                    cs.by_part[idx] += 1;
                }
                for v in 0..n {
                    let c = self.draws[v] as usize;
                    let idx = part.part_of(v as u32) as usize * stride + c;
                    // Satisfied iff every vertex that drew c is in v's part.
                    self.satisfied[v] = cs.global[c] == cs.by_part[idx];
                }
            }
            _ => {
                for v in 0..n as u32 {
                    let c = self.draws[v as usize];
                    self.satisfied[v as usize] =
                        !self.g.neighbours(v).iter().any(|&u| self.draws[u as usize] == c);
                }
            }
        }
    }

    fn assert_no_permanent_collision(&self, perm: &[bool]) {
        let n = self.g.n();
        match self.g.partition() {
            Some(part) => {
                // Permanent same-colour counts, globally and per part; a
                // cross-part repeat among permanent vertices is a collision.
                let stride = self.cfg.d + 1;
                let mut global = vec![0u32; stride];
                let mut by_part = vec![0u32; part.part_count() * stride];
                for v in 0..n {
                    if perm[v] {
                        let c = self.draws[v] as usize;
                        global[c] += 1;
                        by_part[part.part_of(v as u32) as usize * stride + c] += 1;
                    }
                }
                for v in 0..n {
                    if perm[v] {
                        let c = self.draws[v] as usize;
                        let idx = part.part_of(v as u32) as usize * stride + c;
                        assert!(
                            global[c] == by_part[idx],
                            "permanent vertices share colour {c} across an edge at t={}",
                            self.t
                        );
                    }
                }
            }
            None => {
                for (u, v) in self.g.edges_iter() {
                    assert!(
                        !(perm[u as usize]
                            && perm[v as usize]
                            && self.draws[u as usize] == self.draws[v as usize]),
                        "permanent vertices {u} and {v} share a colour at t={}",
                        self.t
                    );
                }
            }
        }
    }

    /// Step until a collision-free slot or until `max_slots` completed
    /// slots, whichever comes first.
    pub fn run_until_proper(&mut self, max_slots: u64) -> ConvergenceResult {
        self.run_until_proper_with(max_slots, |_| {})
    }

    /// [`Engine::run_until_proper`] with a per-slot callback, so long runs
    /// can stream records instead of storing them.
    pub fn run_until_proper_with(
        &mut self,
        max_slots: u64,
        mut on_record: impl FnMut(&SlotRecord),
    ) -> ConvergenceResult {
        if self.absorbed {
            return ConvergenceResult {
                converged: true,
                slots: self.t,
                epochs: self.cfg.schedule.epochs_covering(self.t),
            };
        }
        while self.t < max_slots {
            let rec = self.step();
            on_record(&rec);
            if rec.proper {
                return ConvergenceResult {
                    converged: true,
                    slots: rec.t,
                    epochs: self.cfg.schedule.epochs_covering(rec.t),
                };
            }
        }
        ConvergenceResult { converged: false, slots: self.t, epochs: None }
    }

    /// Run exactly `count` slots, collecting the records.
    pub fn run_slots(&mut self, count: u64) -> Vec<SlotRecord> {
        (0..count).map(|_| self.step()).collect()
    }

    /// Current colouring when every distribution is a point mass (always
    /// true once absorbed), drawn colours otherwise after at least one slot.
    pub fn current_colouring(&self) -> Option<Colouring> {
        let all_point = self.p.iter().all(|p| matches!(p, ProbVector::Point(_)));
        let colours: Vec<u32> = if all_point {
            self.p
                .iter()
                .map(|p| match p {
                    ProbVector::Point(c) => *c,
                    _ => unreachable!(),
                })
                .collect()
        } else if self.t > 0 {
            self.draws.clone()
        } else {
            return None;
        };
        Colouring::new(colours, self.cfg.d).ok()
    }

    /// Force vertex `v` to colour `c`, keeping its permanence. Suspends the
    /// collision self-checks until the next reset, because the forced
    /// colour may collide with a permanent neighbour, a state the dynamics
    /// can only leave through a reset.
    pub fn force_colour(&mut self, v: u32, c: u32) -> Result<(), EngineError> {
        if v as usize >= self.g.n() {
            return Err(EngineError::VertexOutOfRange(v, self.g.n()));
        }
        if c == 0 || c as usize > self.cfg.d {
            return Err(EngineError::StartColour(c, self.cfg.d));
        }
        self.p[v as usize] = ProbVector::Point(c);
        self.draws[v as usize] = c;
        if self.frozen[v as usize] != 0 {
            self.frozen[v as usize] = c;
        }
        self.checks_suspended = true;
        self.absorbed = false;
        Ok(())
    }

    /// Replace vertex `v`'s distribution with uniform, keeping its flags.
    /// Setup helper for measurements that start from hand-built states.
    pub fn set_uniform(&mut self, v: u32) -> Result<(), EngineError> {
        if v as usize >= self.g.n() {
            return Err(EngineError::VertexOutOfRange(v, self.g.n()));
        }
        self.p[v as usize] = ProbVector::Uniform;
        self.absorbed = false;
        Ok(())
    }

    /// Drop vertex `v` out of the permanent state without touching its
    /// distribution, as if it alone had been reset.
    pub fn clear_permanence(&mut self, v: u32) -> Result<(), EngineError> {
        if v as usize >= self.g.n() {
            return Err(EngineError::VertexOutOfRange(v, self.g.n()));
        }
        if self.m[v as usize] {
            self.m[v as usize] = false;
            self.frozen[v as usize] = 0;
            self.z += 1;
        }
        self.absorbed = false;
        self.checks_suspended = true;
        Ok(())
    }

    /// Recolour `count` distinct vertices chosen uniformly at random, each
    /// to an independent uniform colour from the full palette. Returns
    /// `(vertex, old, new)` triples. Permanence flags are left alone.
    pub fn perturb_random(
        &mut self,
        count: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<(u32, u32, u32)>, EngineError> {
        let n = self.g.n();
        let count = count.min(n);
        let mut pool: Vec<u32> = (0..n as u32).collect();
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            let j = rng.gen_range(i..n);
            pool.swap(i, j);
            let v = pool[i];
            let old = match &self.p[v as usize] {
                ProbVector::Point(c) => *c,
                _ => self.draws[v as usize],
            };
            let new = rng.gen_range(0..self.cfg.d as u32) + 1;
            self.force_colour(v, new)?;
            out.push((v, old, new));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build, GraphSpec};

    fn k(n: usize) -> Graph {
        build(&GraphSpec::Complete(n), 0).unwrap()
    }

    #[test]
    fn single_vertex_locks_first_slot() {
        let g = k(1);
        let cfg = Variant::SimplifiedFcfl.config(&g, 3);
        assert_eq!(cfg.schedule, ResetSchedule::Periodic { period: 1 });
        let mut e = Engine::new(&g, cfg, 7).unwrap();
        let rec = e.step();
        assert_eq!(rec, SlotRecord { t: 1, z: 0, proper: true });
        assert!(e.is_absorbed());
    }

    #[test]
    fn undersized_palette_never_converges() {
        let g = k(2);
        let cfg = EngineConfig { d: 1, b: 1.0, schedule: ResetSchedule::Periodic { period: 3 } };
        let mut e = Engine::new(&g, cfg, 1).unwrap();
        let res = e.run_until_proper(500);
        assert!(!res.converged);
        assert_eq!(res.slots, 500);
    }

    #[test]
    fn edgeless_graph_is_immediately_proper() {
        let g = build(&GraphSpec::ErdosRenyi { n: 10, p: 0.0 }, 0).unwrap();
        let cfg = EngineConfig { d: 1, b: 1.0, schedule: ResetSchedule::Never };
        let mut e = Engine::new(&g, cfg, 0).unwrap();
        let res = e.run_until_proper(10);
        assert!(res.converged && res.slots == 1);
    }

    #[test]
    fn deterministic_under_seed() {
        let g = build(&GraphSpec::CompleteMultipartite(vec![3, 3, 3]), 0).unwrap();
        let run = |seed: u64| {
            let mut e = Engine::new(&g, Variant::SimplifiedFcfl.config(&g, 7), seed).unwrap();
            e.run_slots(60)
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }

    #[test]
    fn complete_graph_converges_and_stays() {
        let g = k(6);
        let mut e = Engine::new(&g, Variant::SimplifiedFcfl.config(&g, 6), 11).unwrap();
        let res = e.run_until_proper(10_000);
        assert!(res.converged);
        assert_eq!(res.epochs, ResetSchedule::Periodic { period: 6 }.epochs_covering(res.slots));
        let colours = e.current_colouring().unwrap();
        assert!(crate::graph::is_proper(&g, &colours).unwrap());
        // Across further slots and resets nothing moves.
        for rec in e.run_slots(1_000) {
            assert_eq!((rec.z, rec.proper), (0, true));
        }
        assert_eq!(e.current_colouring().unwrap(), colours);
        assert!(e.epoch() > 0);
    }

    #[test]
    fn reset_preserves_distributions() {
        let g = k(3);
        let cfg = EngineConfig { d: 3, b: 1.0, schedule: ResetSchedule::Explicit(vec![2, 2, 4]) };
        let mut e = Engine::new(&g, cfg, 3).unwrap();
        e.run_until_proper(1_000);
        let colours = e.current_colouring().unwrap();
        // Epoch counter swallows the duplicate entry.
        e.run_slots(6);
        assert_eq!(e.epoch(), 3);
        assert_eq!(e.current_colouring().unwrap(), colours);
    }

    #[test]
    fn partial_mixing_builds_floored_dense() {
        let g = k(2);
        let cfg = EngineConfig { d: 4, b: 0.5, schedule: ResetSchedule::Periodic { period: 100 } };
        let mut e = Engine::with_start(
            &g,
            cfg,
            9,
            &Colouring::new(vec![2, 2], 4).unwrap(),
        )
        .unwrap();
        e.step();
        // Both started on the same point colour, collided, and remixed.
        for v in 0..2 {
            match e.prob_vector(v) {
                ProbVector::Dense(w) => {
                    assert_eq!(w.len(), 4);
                    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    assert!(w.iter().all(|&x| x >= 0.5 / 4.0 - 1e-12));
                    assert!((w[1] - (0.5 + 0.125)).abs() < 1e-12);
                }
                other => panic!("expected dense distribution, got {other:?}"),
            }
        }
        // Uniform is a fixed point of the remix for any b.
        let mut u = Engine::new(&g, EngineConfig { d: 4, b: 0.5, schedule: ResetSchedule::Never }, 9).unwrap();
        loop {
            let rec = u.step();
            if rec.proper || matches!(u.prob_vector(0), ProbVector::Uniform) {
                break;
            }
        }
    }

    #[test]
    fn proper_start_locks_in_one_slot() {
        let g = k(4);
        let cfg = Variant::SimplifiedFcfl.config(&g, 4);
        let start = Colouring::new(vec![1, 2, 3, 4], 4).unwrap();
        let mut e = Engine::with_start(&g, cfg, 0, &start).unwrap();
        let res = e.run_until_proper(10);
        assert!(res.converged && res.slots == 1);
        assert_eq!(e.current_colouring().unwrap(), start);
    }

    #[test]
    fn forced_collision_defers_to_next_reset() {
        let g = k(3);
        let cfg = EngineConfig { d: 3, b: 1.0, schedule: ResetSchedule::Periodic { period: 4 } };
        let mut e = Engine::new(&g, cfg, 21).unwrap();
        e.run_until_proper(1_000);
        let before = e.current_colouring().unwrap();
        // Copy vertex 1's colour onto vertex 0: a permanent collision.
        e.force_colour(0, before.colour(1)).unwrap();
        let res = e.run_until_proper(1_000);
        assert!(res.converged);
        let after = e.current_colouring().unwrap();
        assert!(crate::graph::is_proper(&g, &after).unwrap());
    }

    #[test]
    fn perturb_random_counts_and_bounds() {
        let g = k(5);
        let mut e = Engine::new(&g, Variant::SimplifiedFcfl.config(&g, 5), 2).unwrap();
        e.run_until_proper(10_000);
        let mut rng = {
            use rand::SeedableRng;
            ChaCha8Rng::seed_from_u64(99)
        };
        let moved = e.perturb_random(3, &mut rng).unwrap();
        assert_eq!(moved.len(), 3);
        let mut vs: Vec<u32> = moved.iter().map(|&(v, _, _)| v).collect();
        vs.sort_unstable();
        vs.dedup();
        assert_eq!(vs.len(), 3, "vertices drawn without replacement");
        for &(_, old, new) in &moved {
            assert!((1..=5).contains(&old) && (1..=5).contains(&new));
        }
        let res = e.run_until_proper(10_000);
        assert!(res.converged);
    }

    #[test]
    fn schedule_epoch_covering() {
        let p = ResetSchedule::Periodic { period: 10 };
        assert_eq!(p.epochs_covering(1), Some(1));
        assert_eq!(p.epochs_covering(10), Some(1));
        assert_eq!(p.epochs_covering(11), Some(2));
        let x = ResetSchedule::Explicit(vec![4, 9]);
        assert_eq!(x.epochs_covering(4), Some(1));
        assert_eq!(x.epochs_covering(5), Some(2));
        assert_eq!(x.epochs_covering(10), None);
        assert_eq!(ResetSchedule::Never.epochs_covering(3), None);
    }

    #[test]
    fn invalid_configs_rejected() {
        let g = k(2);
        let bad = |cfg: EngineConfig| Engine::new(&g, cfg, 0).err().unwrap();
        assert_eq!(
            bad(EngineConfig { d: 0, b: 1.0, schedule: ResetSchedule::Never }),
            EngineError::EmptyPalette
        );
        assert_eq!(
            bad(EngineConfig { d: 2, b: 0.0, schedule: ResetSchedule::Never }),
            EngineError::BadB(0.0)
        );
        assert_eq!(
            bad(EngineConfig { d: 2, b: 1.0, schedule: ResetSchedule::Periodic { period: 0 } }),
            EngineError::ZeroPeriod
        );
        assert_eq!(
            bad(EngineConfig { d: 2, b: 1.0, schedule: ResetSchedule::Explicit(vec![3, 2]) }),
            EngineError::BadExplicitSchedule
        );
        let start = Colouring::new(vec![1], 2).unwrap();
        assert!(matches!(
            Engine::with_start(&g, EngineConfig { d: 2, b: 1.0, schedule: ResetSchedule::Never }, 0, &start),
            Err(EngineError::StartLength { got: 1, want: 2 })
        ));
    }

    #[test]
    fn counting_and_edge_scan_sensing_agree() {
        // Same multipartite graph, once with partition metadata and once
        // rebuilt from its edge list (which drops it).
        let with_parts = build(&GraphSpec::CompleteMultipartite(vec![2, 3, 4]), 0).unwrap();
        let plain = Graph::from_edge_list(&with_parts.to_edge_list()).unwrap();
        for seed in 0..10 {
            let cfg = EngineConfig { d: 5, b: 1.0, schedule: ResetSchedule::Periodic { period: 8 } };
            let mut a = Engine::new(&with_parts, cfg.clone(), seed).unwrap();
            let mut b = Engine::new(&plain, cfg, seed).unwrap();
            assert_eq!(a.run_slots(50), b.run_slots(50));
        }
    }
}
