//! Framed-slotted tag inventory: the colouring dynamics as an RFID
//! anti-collision protocol.
//!
//! A reader runs a sequence of frames of D slots each. Every tag picks a
//! slot and transmits its id there; a transmission is read if no
//! interfering tag (a neighbour in the interference graph) transmitted in
//! the same slot. Frames map to engine slots and slots map to colours, so
//! a proper colouring of the interference graph is a schedule in which
//! every tag is read every frame.
//!
//! The modified protocol gives tags a one-bit flag and a stored slot: a
//! tag whose transmission succeeded and whose slot is not already claimed
//! by a flagged neighbour goes silent and keeps the slot, and a periodic
//! release command wakes all flagged tags back up in their stored slots.
//! That is exactly the permanence flag, the point distribution and the
//! reset schedule of the engine, and the two implementations stay in
//! lockstep draw for draw under a shared seed (full mixing, so only
//! uniform redraws and replays ever happen).
//!
//! The classic baselines: fixed-frame ALOHA mutes a tag forever after its
//! first read and stops on the first frame with no transmissions at all
//! (the confirming frame is included in the slot count), and the adaptive
//! variant additionally doubles or halves the frame size when the
//! fraction of collision slots leaves the 30%..70% band.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::experiments::{median, run_pool};
use crate::graph::{Graph, GraphError};
use crate::seeding::{mix_seed, vertex_rng};

const SALT_UNMODIFIED: u64 = 11;

const DFSA_MIN_FRAME: usize = 16;
const DFSA_MAX_FRAME: usize = 1024;
const DFSA_GROW_AT: f64 = 0.7;
const DFSA_SHRINK_AT: f64 = 0.3;

#[derive(Debug, Error, PartialEq)]
pub enum RfidError {
    #[error("frame must have at least one slot")]
    EmptyFrame,
    #[error("release period must be at least 1")]
    ZeroPeriod,
    #[error("unmodified fraction {0} outside [0, 1]")]
    BadFraction(f64),
    #[error("need at least one run")]
    ZeroRuns,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Air-time accounting: a slot costs `slot_ms` whether or not anyone
/// transmits, and every successful read costs `read_ms` on top.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingModel {
    pub slot_ms: u64,
    pub read_ms: u64,
}

impl Default for TimingModel {
    fn default() -> Self {
        TimingModel { slot_ms: 1, read_ms: 6 }
    }
}

impl TimingModel {
    pub fn ms(&self, slots: u64, reads: u64) -> u64 {
        slots * self.slot_ms + reads * self.read_ms
    }
}

/// Modified-protocol tag state. `Fresh` draws a new slot every frame,
/// `Holding` replays its stored slot but answers queries (the state right
/// after a release), `Flagged` holds its slot in silence.
#[derive(Debug, Clone, Copy, PartialEq)]
enum TagState {
    Fresh,
    Holding(u32),
    Flagged(u32),
}

/// What one frame of the modified protocol did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameReport {
    /// Completed frames including this one.
    pub frame: u64,
    /// Whether the release command fired at the start of this frame.
    pub released: bool,
    pub reads: u64,
    pub collision_slots: u64,
    /// Flagged tags at frame end.
    pub flagged: usize,
    /// Every tag has been read at least once, now or earlier.
    pub all_read: bool,
}

/// Slot-occupancy counters over an interference graph, cleared between
/// frames by replaying the touched entries. On complete multipartite
/// graphs "an interfering tag shares my slot" becomes a two-array lookup;
/// other graphs fall back to neighbour scans.
struct SlotCounts {
    global: Vec<u32>,
    by_part: Vec<u32>,
    /// Row width of `by_part`; at least the largest frame ever used.
    stride: usize,
    touched_global: Vec<usize>,
    touched_part: Vec<usize>,
}

impl SlotCounts {
    fn new(parts: usize, max_d: usize) -> Self {
        SlotCounts {
            global: vec![0; max_d],
            by_part: vec![0; parts * max_d],
            stride: max_d,
            touched_global: Vec::new(),
            touched_part: Vec::new(),
        }
    }

    fn clear(&mut self) {
        for &s in &self.touched_global {
            self.global[s] = 0;
        }
        for &i in &self.touched_part {
            self.by_part[i] = 0;
        }
        self.touched_global.clear();
        self.touched_part.clear();
    }

    fn add(&mut self, part: usize, slot: usize) {
        if self.global[slot] == 0 {
            self.touched_global.push(slot);
        }
        self.global[slot] += 1;
        let idx = part * self.stride + slot;
        if self.by_part[idx] == 0 {
            self.touched_part.push(idx);
        }
        self.by_part[idx] += 1;
    }

    /// No tag outside `part` holds `slot`.
    fn clean(&self, part: usize, slot: usize) -> bool {
        self.global[slot] == self.by_part[part * self.stride + slot]
    }
}

enum Sensing {
    Counting(SlotCounts),
    Scan,
}

/// Reader and tag population running the modified protocol on a shared
/// interference graph.
pub struct ModifiedInventory<'g> {
    g: &'g Graph,
    d: usize,
    release_period: u64,
    state: Vec<TagState>,
    unmodified: Vec<bool>,
    n_modified: usize,
    slot_of: Vec<u32>,
    transmitting: Vec<bool>,
    rngs: Vec<ChaCha8Rng>,
    frame: u64,
    first_read: Vec<Option<u64>>,
    unread: usize,
    total_reads: u64,
    total_collision_slots: u64,
    /// Global slot of every read until the first full inventory, for
    /// exact prefix accounting.
    read_events: Vec<u64>,
    collecting_events: bool,
    transmit_sense: Sensing,
    assoc_sense: Sensing,
    collision_mark: Vec<bool>,
    scratch_read: Vec<bool>,
}

impl<'g> ModifiedInventory<'g> {
    pub fn new(
        g: &'g Graph,
        d: usize,
        release_period: u64,
        unmodified_fraction: f64,
        run_seed: u64,
    ) -> Result<Self, RfidError> {
        if d == 0 {
            return Err(RfidError::EmptyFrame);
        }
        if release_period == 0 {
            return Err(RfidError::ZeroPeriod);
        }
        if !(0.0..=1.0).contains(&unmodified_fraction) {
            return Err(RfidError::BadFraction(unmodified_fraction));
        }
        let n = g.n();
        let mut unmodified = vec![false; n];
        let legacy = (unmodified_fraction * n as f64).round() as usize;
        if legacy > 0 {
            // Uniform subset without replacement.
            let mut rng = {
                use rand::SeedableRng;
                ChaCha8Rng::seed_from_u64(mix_seed(run_seed, SALT_UNMODIFIED))
            };
            let mut pool: Vec<usize> = (0..n).collect();
            for i in 0..legacy.min(n) {
                let j = rng.gen_range(i..n);
                pool.swap(i, j);
                unmodified[pool[i]] = true;
            }
        }
        let n_modified = unmodified.iter().filter(|&&u| !u).count();
        let make_sensing = || match g.partition() {
            Some(p) => Sensing::Counting(SlotCounts::new(p.part_count(), d)),
            None => Sensing::Scan,
        };
        Ok(ModifiedInventory {
            g,
            d,
            release_period,
            state: vec![TagState::Fresh; n],
            unmodified,
            n_modified,
            slot_of: vec![0; n],
            transmitting: vec![false; n],
            rngs: (0..n as u32).map(|v| vertex_rng(run_seed, v)).collect(),
            frame: 0,
            first_read: vec![None; n],
            unread: n,
            total_reads: 0,
            total_collision_slots: 0,
            read_events: Vec::new(),
            collecting_events: true,
            transmit_sense: make_sensing(),
            assoc_sense: make_sensing(),
            collision_mark: vec![false; d],
            scratch_read: vec![false; n],
        })
    }

    /// Completed frames.
    pub fn frame(&self) -> u64 {
        self.frame
    }

    /// Per-tag flagged state, comparable against the engine's permanence
    /// flags after the same number of frames.
    pub fn flagged(&self) -> Vec<bool> {
        self.state.iter().map(|s| matches!(s, TagState::Flagged(_))).collect()
    }

    /// Slots associated with each tag in the last frame (drawn or held).
    pub fn slots(&self) -> &[u32] {
        &self.slot_of
    }

    pub fn first_reads(&self) -> &[Option<u64>] {
        &self.first_read
    }

    pub fn total_reads(&self) -> u64 {
        self.total_reads
    }

    pub fn total_collision_slots(&self) -> u64 {
        self.total_collision_slots
    }

    /// Run one frame: optional release, slot draws, playback with reads,
    /// then flag updates.
    pub fn step_frame(&mut self) -> FrameReport {
        let n = self.g.n();
        let released = self.frame > 0 && self.frame % self.release_period == 0;
        if released {
            for s in self.state.iter_mut() {
                if let TagState::Flagged(slot) = *s {
                    *s = TagState::Holding(slot);
                }
            }
        }

        for v in 0..n {
            let slot = if self.unmodified[v] {
                self.rngs[v].gen_range(0..self.d as u32)
            } else {
                match self.state[v] {
                    TagState::Fresh => self.rngs[v].gen_range(0..self.d as u32),
                    TagState::Holding(s) | TagState::Flagged(s) => s,
                }
            };
            self.slot_of[v] = slot;
            self.transmitting[v] = self.unmodified[v] || !matches!(self.state[v], TagState::Flagged(_));
        }

        // Reads: a transmission survives when no interfering transmitter
        // shares the slot. Flagged tags are silent and cannot jam.
        let mut reads = 0u64;
        let mut collision_slots = 0u64;
        match &mut self.transmit_sense {
            Sensing::Counting(counts) => {
                let part = self.g.partition().expect("counting sensing implies partition");
                counts.clear();
                for v in 0..n {
                    if self.transmitting[v] {
                        counts.add(part.part_of(v as u32) as usize, self.slot_of[v] as usize);
                    }
                }
                for v in 0..n {
                    self.scratch_read[v] = self.transmitting[v]
                        && counts.clean(part.part_of(v as u32) as usize, self.slot_of[v] as usize);
                }
            }
            Sensing::Scan => {
                for v in 0..n as u32 {
                    self.scratch_read[v as usize] = self.transmitting[v as usize]
                        && !self.g.neighbours(v).iter().any(|&u| {
                            self.transmitting[u as usize]
                                && self.slot_of[u as usize] == self.slot_of[v as usize]
                        });
                }
            }
        }
        for v in 0..n {
            if self.transmitting[v] && !self.scratch_read[v] {
                let s = self.slot_of[v] as usize;
                if !self.collision_mark[s] {
                    self.collision_mark[s] = true;
                    collision_slots += 1;
                }
            }
        }
        for v in 0..n {
            if self.transmitting[v] {
                self.collision_mark[self.slot_of[v] as usize] = false;
            }
        }
        for v in 0..n {
            if self.scratch_read[v] {
                reads += 1;
                let global_slot = self.frame * self.d as u64 + self.slot_of[v] as u64 + 1;
                if self.first_read[v].is_none() {
                    self.first_read[v] = Some(global_slot);
                    self.unread -= 1;
                }
                if self.collecting_events {
                    self.read_events.push(global_slot);
                }
            }
        }

        // Flag updates need full-neighbourhood occupancy, held slots
        // included: claiming a slot a silent flagged neighbour keeps would
        // collide at the next release.
        match &mut self.assoc_sense {
            Sensing::Counting(counts) => {
                let part = self.g.partition().expect("counting sensing implies partition");
                counts.clear();
                for v in 0..n {
                    counts.add(part.part_of(v as u32) as usize, self.slot_of[v] as usize);
                }
                for v in 0..n {
                    if !self.unmodified[v] && !matches!(self.state[v], TagState::Flagged(_)) {
                        let clean =
                            counts.clean(part.part_of(v as u32) as usize, self.slot_of[v] as usize);
                        self.state[v] = if self.scratch_read[v] && clean {
                            TagState::Flagged(self.slot_of[v])
                        } else {
                            TagState::Fresh
                        };
                    }
                }
            }
            Sensing::Scan => {
                for v in 0..n as u32 {
                    let vi = v as usize;
                    if !self.unmodified[vi] && !matches!(self.state[vi], TagState::Flagged(_)) {
                        let clean = !self
                            .g
                            .neighbours(v)
                            .iter()
                            .any(|&u| self.slot_of[u as usize] == self.slot_of[vi]);
                        self.state[vi] = if self.scratch_read[vi] && clean {
                            TagState::Flagged(self.slot_of[vi])
                        } else {
                            TagState::Fresh
                        };
                    }
                }
            }
        }

        self.frame += 1;
        self.total_reads += reads;
        self.total_collision_slots += collision_slots;
        let all_read = self.unread == 0;
        if all_read {
            self.collecting_events = false;
        }
        FrameReport {
            frame: self.frame,
            released,
            reads,
            collision_slots,
            flagged: self.state.iter().filter(|s| matches!(s, TagState::Flagged(_))).count(),
            all_read,
        }
    }
}

/// One steady-state release pass: a frame in which every flagged tag is
/// woken, replays its slot, and is read again.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SteadyPass {
    pub reads: u64,
    pub collision_slots: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InventoryResult {
    pub n: usize,
    pub n_unmodified: usize,
    pub d: usize,
    pub release_period: u64,
    /// Global slot at which the last still-unread tag was first read.
    pub first_inventory_slot: Option<u64>,
    /// Reads on the air up to and including that slot.
    pub reads_to_first_inventory: u64,
    /// First frame at whose end every modified tag was flagged.
    pub convergence_frame: Option<u64>,
    /// Release passes observed after convergence, `d` slots each.
    pub steady: Vec<SteadyPass>,
    pub frames: u64,
    pub total_reads: u64,
    pub total_collision_slots: u64,
    pub ms_first: Option<u64>,
    /// Air time of one steady pass.
    pub ms_steady: Option<u64>,
}

/// Run the modified protocol to a full inventory, convergence, and
/// `steady_passes` post-convergence release passes (or `max_frames`,
/// whichever stops it first).
pub fn run_modified_inventory(
    g: &Graph,
    d: usize,
    release_period: u64,
    unmodified_fraction: f64,
    steady_passes: usize,
    max_frames: u64,
    run_seed: u64,
    timing: &TimingModel,
) -> Result<InventoryResult, RfidError> {
    let mut inv = ModifiedInventory::new(g, d, release_period, unmodified_fraction, run_seed)?;
    let mut convergence_frame = None;
    let mut steady = Vec::new();
    // Legacy tags never flag, so convergence and steady measurements only
    // make sense for an all-modified population. Asking for zero steady
    // passes means the caller wants the first inventory only, which can be
    // far faster than waiting out the convergence tail.
    let wants_steady = steady_passes > 0 && inv.n_modified == g.n();
    while inv.frame() < max_frames {
        let rep = inv.step_frame();
        if convergence_frame.is_none() && rep.flagged == inv.n_modified && inv.n_modified > 0 {
            convergence_frame = Some(rep.frame);
        }
        if wants_steady
            && convergence_frame.map_or(false, |c| rep.frame > c)
            && rep.released
            && steady.len() < steady_passes
        {
            steady.push(SteadyPass { reads: rep.reads, collision_slots: rep.collision_slots });
        }
        if rep.all_read
            && (!wants_steady || (convergence_frame.is_some() && steady.len() >= steady_passes))
        {
            break;
        }
    }
    let first_inventory_slot = if inv.unread == 0 {
        inv.first_read.iter().map(|r| r.expect("all read")).max()
    } else {
        None
    };
    let reads_to_first = match first_inventory_slot {
        Some(limit) => inv.read_events.iter().filter(|&&s| s <= limit).count() as u64,
        None => 0,
    };
    let ms_steady = steady
        .first()
        .map(|p| timing.ms(d as u64, p.reads));
    Ok(InventoryResult {
        n: g.n(),
        n_unmodified: g.n() - inv.n_modified,
        d,
        release_period,
        first_inventory_slot,
        reads_to_first_inventory: reads_to_first,
        convergence_frame,
        steady,
        frames: inv.frame(),
        total_reads: inv.total_reads,
        total_collision_slots: inv.total_collision_slots,
        ms_first: first_inventory_slot.map(|s| timing.ms(s, reads_to_first)),
        ms_steady,
    })
}

// ---------------------------------------------------------------------------
// Framed-ALOHA baselines
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct AlohaResult {
    pub n: usize,
    pub frames: u64,
    /// Total slots including the final confirming frame.
    pub slots: u64,
    pub reads: u64,
    pub collision_slots: u64,
    pub first_inventory_slot: Option<u64>,
    /// Every tag read and the empty confirming frame observed.
    pub complete: bool,
    pub ms: Option<u64>,
}

fn run_framed_aloha(
    g: &Graph,
    d0: usize,
    adaptive: bool,
    run_seed: u64,
    max_frames: u64,
    timing: &TimingModel,
) -> Result<AlohaResult, RfidError> {
    if d0 == 0 {
        return Err(RfidError::EmptyFrame);
    }
    let n = g.n();
    let mut rngs: Vec<ChaCha8Rng> = (0..n as u32).map(|v| vertex_rng(run_seed, v)).collect();
    let mut muted = vec![false; n];
    let mut slot_of = vec![0u32; n];
    let mut read_now = vec![false; n];
    let mut first_read: Vec<Option<u64>> = vec![None; n];
    let mut d = d0;
    let mut counts = g.partition().map(|p| SlotCounts::new(p.part_count(), DFSA_MAX_FRAME.max(d0)));
    let mut collision_mark = vec![false; DFSA_MAX_FRAME.max(d0)];
    let mut slots_total = 0u64;
    let mut reads_total = 0u64;
    let mut collisions_total = 0u64;
    let mut frames = 0u64;
    let mut complete = false;

    while frames < max_frames {
        let transmitters: Vec<usize> = (0..n).filter(|&v| !muted[v]).collect();
        slots_total += d as u64;
        frames += 1;
        if transmitters.is_empty() {
            // The confirming frame: heard nothing, inventory is closed.
            complete = true;
            break;
        }
        for &v in &transmitters {
            slot_of[v] = rngs[v].gen_range(0..d as u32);
        }
        match (&mut counts, g.partition()) {
            (Some(cs), Some(part)) => {
                cs.clear();
                for &v in &transmitters {
                    cs.add(part.part_of(v as u32) as usize, slot_of[v] as usize);
                }
                for &v in &transmitters {
                    read_now[v] = cs.clean(part.part_of(v as u32) as usize, slot_of[v] as usize);
                }
            }
            _ => {
                for &v in &transmitters {
                    read_now[v] = !self_interferes(g, v as u32, &slot_of, &muted);
                }
            }
        }
        let mut frame_collisions = 0u64;
        for &v in &transmitters {
            if !read_now[v] {
                let s = slot_of[v] as usize;
                if !collision_mark[s] {
                    collision_mark[s] = true;
                    frame_collisions += 1;
                }
            }
        }
        for &v in &transmitters {
            collision_mark[slot_of[v] as usize] = false;
        }
        for &v in &transmitters {
            if read_now[v] {
                reads_total += 1;
                muted[v] = true;
                first_read[v] = Some(slots_total - d as u64 + slot_of[v] as u64 + 1);
            }
        }
        collisions_total += frame_collisions;
        if adaptive {
            let frac = frame_collisions as f64 / d as f64;
            if frac > DFSA_GROW_AT {
                d = (d * 2).min(DFSA_MAX_FRAME);
            } else if frac < DFSA_SHRINK_AT {
                d = (d / 2).max(DFSA_MIN_FRAME);
            }
        }
    }

    let first_inventory_slot = if first_read.iter().all(|r| r.is_some()) {
        first_read.iter().map(|r| r.unwrap()).max()
    } else {
        None
    };
    Ok(AlohaResult {
        n,
        frames,
        slots: slots_total,
        reads: reads_total,
        collision_slots: collisions_total,
        first_inventory_slot,
        complete,
        ms: complete.then(|| timing.ms(slots_total, reads_total)),
    })
}

fn self_interferes(g: &Graph, v: u32, slot_of: &[u32], muted: &[bool]) -> bool {
    g.neighbours(v)
        .iter()
        .any(|&u| !muted[u as usize] && slot_of[u as usize] == slot_of[v as usize])
}

/// Fixed-frame ALOHA with mute-on-read: every unread tag redraws a slot
/// in every frame of `d` slots; reading mutes it for good.
pub fn run_bfsa(
    g: &Graph,
    d: usize,
    run_seed: u64,
    max_frames: u64,
    timing: &TimingModel,
) -> Result<AlohaResult, RfidError> {
    run_framed_aloha(g, d, false, run_seed, max_frames, timing)
}

/// [`run_bfsa`] with frame-size adaptation: the frame doubles when more
/// than 70% of its slots saw collisions and halves below 30%, within
/// [16, 1024].
pub fn run_dfsa(
    g: &Graph,
    d0: usize,
    run_seed: u64,
    max_frames: u64,
    timing: &TimingModel,
) -> Result<AlohaResult, RfidError> {
    run_framed_aloha(g, d0, true, run_seed, max_frames, timing)
}

// ---------------------------------------------------------------------------
// Experiment summaries
// ---------------------------------------------------------------------------

/// Protocols the inventory experiment can run. `Aloha` is the fixed-frame
/// baseline sized like the modified protocol (one slot per colour), for
/// repeated-inventory comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Fcfl,
    Bfsa,
    Dfsa,
    Aloha,
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Fcfl => "fcfl",
            Protocol::Bfsa => "bfsa",
            Protocol::Dfsa => "dfsa",
            Protocol::Aloha => "aloha",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fcfl" => Ok(Protocol::Fcfl),
            "bfsa" => Ok(Protocol::Bfsa),
            "dfsa" => Ok(Protocol::Dfsa),
            "aloha" => Ok(Protocol::Aloha),
            other => Err(format!("unknown protocol {other:?} (fcfl, bfsa, dfsa, aloha)")),
        }
    }
}

/// Median inventory costs over independent runs. For the memoryless
/// baselines a steady-state pass is a full re-inventory, so the steady
/// columns repeat the first-inventory columns; the modified protocol's
/// steady pass is one release frame.
#[derive(Debug, Clone, Serialize)]
pub struct RfidSummary {
    pub protocol: String,
    pub n: usize,
    pub d: usize,
    pub release_period: Option<u64>,
    pub runs: usize,
    pub completed_runs: usize,
    pub median_slots_first: f64,
    pub median_slots_steady: f64,
    pub median_ms_first: f64,
    pub median_ms_steady: f64,
}

/// Run `runs` independent inventories and summarize the medians.
#[allow(clippy::too_many_arguments)]
pub fn inventory_experiment(
    protocol: Protocol,
    g: &Graph,
    d: usize,
    release_period: u64,
    runs: usize,
    seed: u64,
    jobs: Option<usize>,
    timing: &TimingModel,
) -> Result<RfidSummary, RfidError> {
    if runs == 0 {
        return Err(RfidError::ZeroRuns);
    }
    let max_frames = 200_000u64.div_euclid(d as u64).max(2_000);
    struct RunCost {
        slots_first: u64,
        ms_first: u64,
        slots_steady: u64,
        ms_steady: u64,
        complete: bool,
    }
    let costs: Vec<Result<RunCost, RfidError>> = run_pool(runs, jobs, |run| {
        let run_seed = mix_seed(seed, run as u64);
        match protocol {
            Protocol::Fcfl => {
                // First inventory is measured; a steady pass is one release
                // frame replaying the converged schedule, d slots and n
                // reads, checked exactly by the steady-pass runs elsewhere.
                let res = run_modified_inventory(g, d, release_period, 0.0, 0, max_frames, run_seed, timing)?;
                Ok(RunCost {
                    slots_first: res.first_inventory_slot.unwrap_or(res.frames * d as u64),
                    ms_first: res.ms_first.unwrap_or(u64::MAX),
                    slots_steady: d as u64,
                    ms_steady: timing.ms(d as u64, g.n() as u64),
                    complete: res.first_inventory_slot.is_some(),
                })
            }
            Protocol::Bfsa | Protocol::Dfsa | Protocol::Aloha => {
                let res = match protocol {
                    Protocol::Dfsa => run_dfsa(g, d, run_seed, max_frames, timing)?,
                    _ => run_bfsa(g, d, run_seed, max_frames, timing)?,
                };
                let ms = res.ms.unwrap_or(u64::MAX);
                Ok(RunCost {
                    slots_first: res.slots,
                    ms_first: ms,
                    slots_steady: res.slots,
                    ms_steady: ms,
                    complete: res.complete,
                })
            }
        }
    });
    let costs: Vec<RunCost> = costs.into_iter().collect::<Result<_, _>>()?;
    let completed = costs.iter().filter(|c| c.complete).count();
    let col = |f: fn(&RunCost) -> u64| {
        let mut xs: Vec<u64> = costs.iter().map(f).collect();
        median(&mut xs)
    };
    Ok(RfidSummary {
        protocol: protocol.name().to_string(),
        n: g.n(),
        d,
        release_period: (protocol == Protocol::Fcfl).then_some(release_period),
        runs,
        completed_runs: completed,
        median_slots_first: col(|c| c.slots_first),
        median_slots_steady: col(|c| c.slots_steady),
        median_ms_first: col(|c| c.ms_first),
        median_ms_steady: col(|c| c.ms_steady),
    })
}

/// Repeated-inventory cost comparison on 12-part complete multipartite
/// interference graphs: the modified protocol's steady release pass
/// against a full re-inventory by slot-per-colour flagged ALOHA.
#[derive(Debug, Clone, Serialize)]
pub struct RepeatCostRow {
    pub n: usize,
    pub delta: usize,
    pub d: usize,
    pub fcfl_first_ms: f64,
    pub fcfl_steady_ms: f64,
    pub aloha_ms: f64,
}

pub fn repeated_inventory_comparison(
    ns: &[usize],
    runs: usize,
    seed: u64,
    jobs: Option<usize>,
    timing: &TimingModel,
) -> Result<Vec<RepeatCostRow>, RfidError> {
    use crate::graph::{build, GraphSpec};
    if runs == 0 {
        return Err(RfidError::ZeroRuns);
    }
    let mut rows = Vec::new();
    for &n in ns {
        assert!(n % 12 == 0, "12-part graphs need n divisible by 12");
        let g = build(&GraphSpec::CompleteMultipartite(vec![n / 12; 12]), 0)?;
        let delta = g.max_degree();
        let d = delta + 1;
        let fcfl = inventory_experiment(Protocol::Fcfl, &g, d, d as u64, runs, mix_seed(seed, n as u64), jobs, timing)?;
        let aloha = inventory_experiment(Protocol::Aloha, &g, d, d as u64, runs, mix_seed(seed, n as u64 + 1), jobs, timing)?;
        rows.push(RepeatCostRow {
            n,
            delta,
            d,
            fcfl_first_ms: fcfl.median_ms_first,
            fcfl_steady_ms: fcfl.median_ms_steady,
            aloha_ms: aloha.median_ms_steady,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Engine, EngineConfig, ResetSchedule};
    use crate::graph::{build, GraphSpec};

    fn timing() -> TimingModel {
        TimingModel::default()
    }

    #[test]
    fn timing_model_hand_value() {
        assert_eq!(timing().ms(1000, 1000), 7000);
        assert_eq!(TimingModel { slot_ms: 2, read_ms: 5 }.ms(10, 3), 35);
    }

    #[test]
    fn lone_tag_read_and_flagged_in_first_frame() {
        let g = build(&GraphSpec::Complete(1), 0).unwrap();
        let res = run_modified_inventory(&g, 256, 1, 0.0, 1, 100, 5, &timing()).unwrap();
        assert_eq!(res.convergence_frame, Some(1));
        let first = res.first_inventory_slot.unwrap();
        assert!((1..=256).contains(&first));
        assert_eq!(res.reads_to_first_inventory, 1);
        assert_eq!(res.ms_first, Some(first + 6));
    }

    #[test]
    fn steady_passes_read_everyone_cleanly() {
        let g = build(&GraphSpec::Complete(12), 0).unwrap();
        let d = 12;
        let res = run_modified_inventory(&g, d, d as u64, 0.0, 5, 10_000, 3, &timing()).unwrap();
        assert!(res.convergence_frame.is_some());
        assert_eq!(res.steady.len(), 5);
        for pass in &res.steady {
            assert_eq!(pass.reads, 12);
            assert_eq!(pass.collision_slots, 0);
        }
        assert_eq!(res.ms_steady, Some(12 + 6 * 12));
    }

    #[test]
    fn modified_protocol_mirrors_engine() {
        // Shared seed, same graph: flags after frame f must equal the
        // engine's permanence flags after slot f, and drawn slots must be
        // the drawn colours minus one.
        let g = build(&GraphSpec::CompleteMultipartite(vec![3, 3, 3]), 0).unwrap();
        let d = g.max_degree() + 1;
        let seed = 1234;
        let mut inv = ModifiedInventory::new(&g, d, d as u64, 0.0, seed).unwrap();
        let cfg = EngineConfig {
            d,
            b: 1.0,
            schedule: ResetSchedule::Periodic { period: d as u64 },
        };
        let mut eng = Engine::new(&g, cfg, seed).unwrap();
        for _ in 0..60 {
            inv.step_frame();
            eng.step();
            assert_eq!(inv.flagged(), eng.permanent_flags().to_vec());
            let colours: Vec<u32> = inv.slots().iter().map(|&s| s + 1).collect();
            assert_eq!(colours, eng.last_draws().to_vec());
        }
    }

    #[test]
    fn bfsa_lone_tag_two_frames() {
        let g = build(&GraphSpec::Complete(1), 0).unwrap();
        let res = run_bfsa(&g, 4, 9, 100, &timing()).unwrap();
        // One reading frame plus the empty confirming frame.
        assert!(res.complete);
        assert_eq!(res.frames, 2);
        assert_eq!(res.slots, 8);
        assert_eq!(res.reads, 1);
        assert_eq!(res.ms, Some(8 + 6));
    }

    #[test]
    fn bfsa_completes_with_collisions_on_clique() {
        let g = build(&GraphSpec::Complete(30), 0).unwrap();
        let res = run_bfsa(&g, 16, 2, 10_000, &timing()).unwrap();
        assert!(res.complete);
        assert_eq!(res.reads, 30);
        assert!(res.collision_slots > 0);
        assert!(res.first_inventory_slot.unwrap() <= res.slots - 16);
    }

    #[test]
    fn dfsa_shrinks_sparse_frames() {
        let g = build(&GraphSpec::Complete(2), 0).unwrap();
        let b = run_bfsa(&g, 256, 7, 100, &timing()).unwrap();
        let d = run_dfsa(&g, 256, 7, 100, &timing()).unwrap();
        assert!(b.complete && d.complete);
        // Two tags in 256 slots collide in almost no runs, so the
        // adaptation halves its way down instead of burning full frames.
        assert!(d.slots < b.slots);
    }

    #[test]
    fn unmodified_tags_still_get_read() {
        let g = build(&GraphSpec::CompleteMultipartite(vec![25, 25]), 0).unwrap();
        let d = g.max_degree() + 1;
        let res = run_modified_inventory(&g, d, d as u64, 0.1, 1, 50_000, 77, &timing()).unwrap();
        assert_eq!(res.n_unmodified, 5);
        assert!(res.first_inventory_slot.is_some(), "legacy tags starve the inventory");
    }

    #[test]
    fn summary_for_memoryless_protocol_repeats_first() {
        let g = build(&GraphSpec::Complete(10), 0).unwrap();
        let s = inventory_experiment(Protocol::Bfsa, &g, 32, 1, 9, 3, Some(2), &timing()).unwrap();
        assert_eq!(s.completed_runs, 9);
        assert_eq!(s.median_slots_first, s.median_slots_steady);
        assert_eq!(s.median_ms_first, s.median_ms_steady);
        assert!(s.release_period.is_none());
        let f = inventory_experiment(Protocol::Fcfl, &g, 10, 10, 9, 3, Some(2), &timing()).unwrap();
        assert_eq!(f.median_slots_steady, 10.0);
        assert_eq!(f.median_ms_steady, (10 + 6 * 10) as f64);
    }

    #[test]
    fn config_validation() {
        let g = build(&GraphSpec::Complete(2), 0).unwrap();
        assert_eq!(
            ModifiedInventory::new(&g, 0, 1, 0.0, 0).err(),
            Some(RfidError::EmptyFrame)
        );
        assert_eq!(
            ModifiedInventory::new(&g, 4, 0, 0.0, 0).err(),
            Some(RfidError::ZeroPeriod)
        );
        assert_eq!(
            ModifiedInventory::new(&g, 4, 1, 1.5, 0).err(),
            Some(RfidError::BadFraction(1.5))
        );
    }
}
