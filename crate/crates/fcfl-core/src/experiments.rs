//! Batch experiment drivers: many independent simulation runs, summarized.
//!
//! Every run draws its seed from `(experiment seed, run index)`, so results
//! are identical whether runs execute serially or on a thread pool, and
//! individual runs can be replayed in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::bounds::{epoch_bound, expected_z_bound, BoundError};
use crate::engine::{Engine, EngineError, Variant};
use crate::graph::{build, Colouring, Graph, GraphError, GraphSpec};
use crate::seeding::mix_seed;

const SALT_GRAPH: u64 = 1;
const SALT_ENGINE: u64 = 2;
const SALT_PERTURB: u64 = 3;
const SALT_LBEB: u64 = 4;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error("vertex count {0} not divisible into {1} equal parts")]
    IndivisibleParts(usize, usize),
    #[error("need at least one run")]
    ZeroRuns,
}

/// Map run indices through `f`, on a thread pool when the `parallel`
/// feature is on. Results come back in index order either way, and each
/// run must derive all randomness from its index for the two paths to
/// agree bit for bit.
pub fn run_pool<T, F>(runs: usize, jobs: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        match jobs {
            Some(1) => (0..runs).map(f).collect(),
            Some(j) => rayon::ThreadPoolBuilder::new()
                .num_threads(j)
                .build()
                .expect("thread pool")
                .install(|| (0..runs).into_par_iter().map(f).collect()),
            None => (0..runs).into_par_iter().map(f).collect(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = jobs;
        (0..runs).map(f).collect()
    }
}

/// Sorted-middle median; mean of the two middles for even counts.
pub fn median(xs: &mut [u64]) -> f64 {
    assert!(!xs.is_empty());
    xs.sort_unstable();
    let mid = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[mid] as f64
    } else {
        (xs[mid - 1] + xs[mid]) as f64 / 2.0
    }
}

/// One row of comma-separated output. The header names the columns.
pub trait CsvRow {
    fn csv_header() -> &'static str;
    fn csv_line(&self) -> String;
}

// ---------------------------------------------------------------------------
// Drift of the memoryless chain
// ---------------------------------------------------------------------------

/// One point of [`drift_curve`].
#[derive(Debug, Clone, Serialize)]
pub struct DriftPoint {
    /// Unsettled vertices in the start state.
    pub z: usize,
    /// Mean unsettled count after one slot.
    pub mean_next: f64,
    /// `mean_next - z`.
    pub drift: f64,
    pub std_err: f64,
    /// Exhaustive-enumeration value, when the state space is small enough.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<f64>,
}

impl CsvRow for DriftPoint {
    fn csv_header() -> &'static str {
        "z,mean_next,drift,std_err,exact"
    }

    fn csv_line(&self) -> String {
        let exact = self.exact.map_or(String::new(), |e| format!("{e}"));
        format!("{},{},{},{},{}", self.z, self.mean_next, self.drift, self.std_err, exact)
    }
}

/// One-slot drift of the unsettled count for the memoryless dynamics
/// (reset every slot, full mixing) on the complete graph with palette size
/// N. The start state has N − z vertices holding distinct point colours
/// and z drawing uniformly; one slot runs; the unsatisfied count is the
/// next state's unsettled count. The interesting feature is that the drift
/// turns positive for small z ≥ 1 once N is moderately large: near-complete
/// colourings cascade, which is what permanence flags prevent.
pub fn drift_curve(
    n: usize,
    runs: usize,
    seed: u64,
    jobs: Option<usize>,
) -> Result<Vec<DriftPoint>, ExperimentError> {
    if runs == 0 {
        return Err(ExperimentError::ZeroRuns);
    }
    let g = build(&GraphSpec::Complete(n), 0)?;
    let mut out = Vec::with_capacity(n + 1);
    for z in 0..=n {
        if z == 0 {
            out.push(DriftPoint { z, mean_next: 0.0, drift: 0.0, std_err: 0.0, exact: Some(0.0) });
            continue;
        }
        let samples = run_pool(runs, jobs, |run| {
            let run_seed = mix_seed(mix_seed(seed, z as u64), run as u64);
            one_drift_slot(&g, n, z, run_seed)
        });
        let samples: Vec<f64> = samples.into_iter().map(|x| x as f64).collect();
        let mean = samples.iter().sum::<f64>() / runs as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (runs as f64 - 1.0).max(1.0);
        out.push(DriftPoint {
            z,
            mean_next: mean,
            drift: mean - z as f64,
            std_err: (var / runs as f64).sqrt(),
            exact: drift_exact_mean_next(n, z),
        });
    }
    Ok(out)
}

fn one_drift_slot(g: &Graph, n: usize, z: usize, run_seed: u64) -> usize {
    // Settled vertices take colours 1..=n−z; which colours they hold does
    // not matter on the complete graph, only that they are distinct.
    let colours: Vec<u32> = (0..n as u32).map(|v| if (v as usize) < n - z { v + 1 } else { 1 }).collect();
    let start = Colouring::new(colours, n).expect("valid start");
    let cfg = Variant::LearningBeb.config(g, n);
    let mut e = Engine::with_start(g, cfg, run_seed, &start).expect("valid engine");
    for v in (n - z)..n {
        e.set_uniform(v as u32).expect("vertex in range");
    }
    e.step().z
}

/// Exact mean unsettled count after one slot of the [`drift_curve`] state,
/// by enumerating all n^z draw tuples of the z free vertices. None when
/// the tuple count exceeds 2 million.
pub fn drift_exact_mean_next(n: usize, z: usize) -> Option<f64> {
    if z == 0 {
        return Some(0.0);
    }
    let tuples = (n as u128).checked_pow(z as u32)?;
    if tuples > 2_000_000 {
        return None;
    }
    let settled = n - z;
    let mut draw = vec![1u32; z];
    let mut counts = vec![0u32; n + 1];
    let mut total: f64 = 0.0;
    loop {
        for &c in draw.iter() {
            counts[c as usize] += 1;
        }
        let mut unsat = 0usize;
        for &c in draw.iter() {
            // A free vertex fails by hitting a settled colour or a twin draw.
            if c as usize <= settled || counts[c as usize] >= 2 {
                unsat += 1;
            }
        }
        for c in 1..=settled {
            // A settled vertex fails when any free vertex drew its colour.
            if counts[c] >= 1 {
                unsat += 1;
            }
        }
        total += unsat as f64;
        for &c in draw.iter() {
            counts[c as usize] = 0;
        }
        // Odometer increment over the z digits.
        let mut i = 0;
        loop {
            if i == z {
                return Some(total / tuples as f64);
            }
            if (draw[i] as usize) < n {
                draw[i] += 1;
                break;
            }
            draw[i] = 1;
            i += 1;
        }
    }
}

// ---------------------------------------------------------------------------
// Unsettled count at epoch boundaries
// ---------------------------------------------------------------------------

/// Mean unsettled count at the end of each reset epoch, next to its
/// closed-form ceiling.
#[derive(Debug, Clone, Serialize)]
pub struct ZStat {
    pub tau: u32,
    pub mean_z: f64,
    pub std_err: f64,
    pub bound: f64,
}

impl CsvRow for ZStat {
    fn csv_header() -> &'static str {
        "tau,mean_z,std_err,bound"
    }

    fn csv_line(&self) -> String {
        format!("{},{},{},{}", self.tau, self.mean_z, self.std_err, self.bound)
    }
}

/// Run the Δ+1-periodic dynamics on the complete graph K_n with palette
/// size n and record the unsettled count after each of the first `max_tau`
/// epochs, averaged over `runs` runs.
pub fn z_epoch_profile(
    n: usize,
    max_tau: u32,
    runs: usize,
    seed: u64,
    jobs: Option<usize>,
) -> Result<Vec<ZStat>, ExperimentError> {
    if runs == 0 {
        return Err(ExperimentError::ZeroRuns);
    }
    let g = build(&GraphSpec::Complete(n), 0)?;
    let period = n as u64;
    let per_run: Vec<Vec<usize>> = run_pool(runs, jobs, |run| {
        let cfg = Variant::SimplifiedFcfl.config(&g, n);
        let mut e = Engine::new(&g, cfg, mix_seed(seed, run as u64)).expect("valid engine");
        let records = e.run_slots(period * max_tau as u64);
        (1..=max_tau as usize).map(|tau| records[tau * n - 1].z).collect()
    });
    let mut out = Vec::with_capacity(max_tau as usize);
    for tau in 1..=max_tau {
        let vals: Vec<f64> = per_run.iter().map(|r| r[tau as usize - 1] as f64).collect();
        let mean = vals.iter().sum::<f64>() / runs as f64;
        let var = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (runs as f64 - 1.0).max(1.0);
        out.push(ZStat {
            tau,
            mean_z: mean,
            std_err: (var / runs as f64).sqrt(),
            bound: expected_z_bound(tau, n, n - 1, 1.0)?,
        });
    }
    Ok(out)
}

/// Fraction of runs on K_n whose convergence needed at least ⌈B⌉ epochs,
/// where B is the closed-form epoch count for undershoot probability 1/2.
/// Returns `(fraction, B)`. B is calibrated so the true fraction sits at
/// or below one half.
pub fn epoch_tail_fraction(
    n: usize,
    runs: usize,
    seed: u64,
    jobs: Option<usize>,
) -> Result<(f64, f64), ExperimentError> {
    if runs == 0 {
        return Err(ExperimentError::ZeroRuns);
    }
    let g = build(&GraphSpec::Complete(n), 0)?;
    let bound = epoch_bound(n, n - 1, 0.5)?;
    let threshold = bound.ceil() as u64;
    let cap = n as u64 * (threshold * 8 + 100);
    let exceeded = run_pool(runs, jobs, |run| {
        let cfg = Variant::SimplifiedFcfl.config(&g, n);
        let mut e = Engine::new(&g, cfg, mix_seed(seed, run as u64)).expect("valid engine");
        let res = e.run_until_proper(cap);
        match res.epochs {
            Some(tau) if res.converged => tau >= threshold,
            _ => true,
        }
    });
    let count = exceeded.iter().filter(|&&x| x).count();
    Ok((count as f64 / runs as f64, bound))
}

// ---------------------------------------------------------------------------
// Convergence time against the closed-form ceiling
// ---------------------------------------------------------------------------

/// Graph families of the scaling comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphKind {
    Complete,
    Bipartite,
    TwelvePartite,
}

impl GraphKind {
    pub fn spec(&self, n: usize) -> Result<GraphSpec, ExperimentError> {
        let parts = match self {
            GraphKind::Complete => return Ok(GraphSpec::Complete(n)),
            GraphKind::Bipartite => 2,
            GraphKind::TwelvePartite => 12,
        };
        if n % parts != 0 || n == 0 {
            return Err(ExperimentError::IndivisibleParts(n, parts));
        }
        Ok(GraphSpec::CompleteMultipartite(vec![n / parts; parts]))
    }

    pub fn name(&self) -> &'static str {
        match self {
            GraphKind::Complete => "complete",
            GraphKind::Bipartite => "bipartite",
            GraphKind::TwelvePartite => "12-partite",
        }
    }
}

impl std::str::FromStr for GraphKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "complete" => Ok(GraphKind::Complete),
            "bipartite" => Ok(GraphKind::Bipartite),
            "12-partite" => Ok(GraphKind::TwelvePartite),
            other => Err(format!("unknown graph kind {other:?} (complete, bipartite, 12-partite)")),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RatioRow {
    pub kind: String,
    pub n: usize,
    pub delta: usize,
    pub d: usize,
    pub runs: usize,
    pub median_slots: f64,
    pub bound_slots: f64,
    /// `median_slots / bound_slots`; below 1 means the ceiling holds with
    /// room to spare at the median.
    pub ratio: f64,
}

impl CsvRow for RatioRow {
    fn csv_header() -> &'static str {
        "kind,N,delta,D,runs,median_slots,bound_slots,ratio"
    }

    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.kind, self.n, self.delta, self.d, self.runs, self.median_slots, self.bound_slots, self.ratio
        )
    }
}

/// Median convergence time of the Δ+1-periodic dynamics with the tightest
/// workable palette D = Δ+1, as a fraction of the closed-form slot ceiling
/// (Δ+1 slots per epoch times the epoch count for undershoot 1/2).
pub fn ratio_experiment(
    kinds: &[GraphKind],
    ns: &[usize],
    runs: usize,
    seed: u64,
    jobs: Option<usize>,
) -> Result<Vec<RatioRow>, ExperimentError> {
    if runs == 0 {
        return Err(ExperimentError::ZeroRuns);
    }
    let mut rows = Vec::new();
    for kind in kinds {
        for &n in ns {
            let g = build(&kind.spec(n)?, 0)?;
            let delta = g.max_degree();
            let d = delta + 1;
            let bound = epoch_bound(n, delta, 0.5)?;
            let bound_slots = (delta as f64 + 1.0) * bound;
            let cap = (delta as u64 + 1) * (bound.ceil() as u64 * 8 + 100);
            let mut slots: Vec<u64> = run_pool(runs, jobs, |run| {
                let cfg = Variant::SimplifiedFcfl.config(&g, d);
                let mut e = Engine::new(&g, cfg, mix_seed(mix_seed(seed, n as u64), run as u64))
                    .expect("valid engine");
                // A capped run reports the cap itself, biasing the median
                // upward, which is the conservative direction here.
                e.run_until_proper(cap).slots
            });
            let median_slots = median(&mut slots);
            rows.push(RatioRow {
                kind: kind.name().to_string(),
                n,
                delta,
                d,
                runs,
                median_slots,
                bound_slots,
                ratio: median_slots / bound_slots,
            });
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Recovery from perturbation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct PerturbConfig {
    /// Vertices of the base complete graph.
    pub n: usize,
    /// Fraction of edges removed from it.
    pub thin_fraction: f64,
    /// Fraction of vertices recoloured after convergence (rounded up).
    pub perturb_fraction: f64,
    pub runs: usize,
    /// Runs of the memoryless comparison arm.
    pub lbeb_runs: usize,
    /// Also knock perturbed vertices out of the permanent state, instead
    /// of leaving recovery to the next scheduled reset.
    pub clear_permanence: bool,
    pub seed: u64,
    pub jobs: Option<usize>,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig {
            n: 60,
            thin_fraction: 0.2,
            perturb_fraction: 0.02,
            runs: 200,
            lbeb_runs: 50,
            clear_permanence: false,
            seed: 0,
            jobs: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbReport {
    pub runs: usize,
    pub perturbed_per_run: usize,
    /// Median slots from a cold uniform start to the first proper slot.
    pub initial_median_slots: f64,
    /// Median slots from the perturbation back to a proper slot.
    pub recovery_median_slots: f64,
    pub max_recovery_slots: u64,
    pub unrecovered: usize,
    /// The same perturbed colourings handed to the memoryless dynamics.
    pub lbeb_runs: usize,
    pub lbeb_recovered: usize,
    pub lbeb_cap_slots: u64,
}

struct PerturbRun {
    initial: u64,
    recovery: u64,
    recovered: bool,
    d: usize,
    graph_seed: u64,
    colouring: Vec<u32>,
    moved: Vec<(u32, u32, u32)>,
}

/// Converge on a randomly thinned complete graph, recolour a few vertices
/// at random, and measure how long the dynamics take to become proper
/// again. The memoryless arm starts from the same perturbed colourings and
/// near-always fails to re-converge within a generous cap, which is the
/// observable difference permanence-plus-resets makes.
pub fn perturbation_experiment(cfg: &PerturbConfig) -> Result<PerturbReport, ExperimentError> {
    if cfg.runs == 0 {
        return Err(ExperimentError::ZeroRuns);
    }
    let perturbed = ((cfg.perturb_fraction * cfg.n as f64).ceil() as usize).max(1);
    let spec_of = |graph_seed: u64| -> Result<Graph, GraphError> {
        build(
            &GraphSpec::EdgeThinned {
                base: Box::new(GraphSpec::Complete(cfg.n)),
                fraction: cfg.thin_fraction,
            },
            graph_seed,
        )
    };

    let runs: Vec<PerturbRun> = run_pool(cfg.runs, cfg.jobs, |run| {
        let run_seed = mix_seed(cfg.seed, run as u64);
        let graph_seed = mix_seed(run_seed, SALT_GRAPH);
        let g = spec_of(graph_seed).expect("valid spec");
        let d = g.max_degree() + 1;
        let engine_cfg = Variant::SimplifiedFcfl.config(&g, d);
        let cap = (g.max_degree() as u64 + 1) * 1000;
        let mut e = Engine::new(&g, engine_cfg, mix_seed(run_seed, SALT_ENGINE)).expect("valid engine");
        let first = e.run_until_proper(cap);
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(run_seed, SALT_PERTURB));
        let colouring = e.current_colouring().expect("colouring after convergence").colours().to_vec();
        let moved = e.perturb_random(perturbed, &mut rng).expect("perturbation applies");
        if cfg.clear_permanence {
            for &(v, _, _) in &moved {
                e.clear_permanence(v).expect("perturbed vertex exists");
            }
        }
        let t0 = e.t();
        let second = e.run_until_proper(t0 + cap);
        PerturbRun {
            initial: first.slots,
            recovery: second.slots - t0,
            recovered: second.converged,
            d,
            graph_seed,
            colouring,
            moved,
        }
    });

    let mut initial: Vec<u64> = runs.iter().map(|r| r.initial).collect();
    let mut recovery: Vec<u64> = runs.iter().map(|r| r.recovery).collect();
    let initial_median = median(&mut initial);
    let recovery_median = median(&mut recovery);
    let unrecovered = runs.iter().filter(|r| !r.recovered).count();

    let lbeb_runs = cfg.lbeb_runs.min(cfg.runs);
    let lbeb_cap = 1000 * (recovery_median.round() as u64).max(1);
    let lbeb_outcomes = run_pool(lbeb_runs, cfg.jobs, |run| {
        let r = &runs[run];
        let run_seed = mix_seed(cfg.seed, run as u64);
        let g = spec_of(r.graph_seed).expect("valid spec");
        let start = Colouring::new(r.colouring.clone(), r.d).expect("stored colouring valid");
        let engine_cfg = Variant::LearningBeb.config(&g, r.d);
        let mut e = Engine::with_start(&g, engine_cfg, mix_seed(run_seed, SALT_LBEB), &start)
            .expect("valid engine");
        // Replay the exact perturbation the first arm applied.
        for &(v, _, new) in &r.moved {
            e.force_colour(v, new).expect("stored perturbation valid");
        }
        e.run_until_proper(lbeb_cap).converged
    });
    let lbeb_recovered = lbeb_outcomes.iter().filter(|&&x| x).count();

    Ok(PerturbReport {
        runs: cfg.runs,
        perturbed_per_run: perturbed,
        initial_median_slots: initial_median,
        recovery_median_slots: recovery_median,
        max_recovery_slots: runs.iter().map(|r| r.recovery).max().unwrap_or(0),
        unrecovered,
        lbeb_runs,
        lbeb_recovered,
        lbeb_cap_slots: lbeb_cap,
    })
}
