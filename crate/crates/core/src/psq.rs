//! M/G/1 processor-sharing queue, simulated exactly in virtual time.
//!
//! With `k` customers present each receives service at rate `1/k`. Tracking
//! the attained service `V` of a customer present throughout, a customer
//! arriving at virtual time `V_a` with size `x` leaves when `V` reaches
//! `V_a + x`, so departures come out of a min-heap of those keys.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

use crate::cmj::{make_initial, CmjError, InitialCondition};
use crate::distributions::ServiceDist;
use crate::paths::{positive_intervals, window, Excursion, Path, PathBuilder, PathError};

#[derive(Debug, Error, PartialEq)]
pub enum PsError {
    #[error("invalid argument: {0}")]
    Arg(String),
    #[error(transparent)]
    Initial(#[from] CmjError),
    #[error(transparent)]
    Path(#[from] PathError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PsStop {
    /// Until the queue first empties (or `max_time`, flagged incomplete).
    UntilEmpty { max_time: f64 },
    /// Run on `[0, t)`.
    Horizon(f64),
    /// Until the queue has emptied this many times (or `max_time`).
    BusyPeriods { count: usize, max_time: f64 },
}

/// Result of [`simulate_ps`].
#[derive(Debug, Clone, PartialEq)]
pub struct PsTrace {
    pub queue_length: Path,
    /// Unfinished work; slope -1 while busy.
    pub workload: Path,
    pub arrival_times: Vec<f64>,
    pub arrival_sizes: Vec<f64>,
    pub departure_times: Vec<f64>,
    /// Residual service of customers present at time 0.
    pub initial: Vec<f64>,
    /// The requested stopping event happened before `max_time`.
    pub completed: bool,
    pub end_time: f64,
}

#[derive(Clone, Copy, PartialEq)]
struct Key(f64);
impl Eq for Key {}
impl PartialOrd for Key {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Key {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&o.0)
    }
}

/// Simulates from explicit initial residuals.
pub fn simulate_ps_from<R: Rng + ?Sized>(
    lambda: f64,
    s: &ServiceDist,
    initial: &[f64],
    stop: PsStop,
    rng: &mut R,
) -> Result<PsTrace, PsError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(PsError::Arg(format!("lambda {lambda}")));
    }
    if let Some(&bad) = initial.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
        return Err(PsError::Initial(CmjError::NonPositiveResidual(bad)));
    }
    let (limit, target) = match stop {
        PsStop::UntilEmpty { max_time } => (max_time, 1),
        PsStop::Horizon(h) => (h, usize::MAX),
        PsStop::BusyPeriods { count, max_time } => (max_time, count),
    };
    if !(limit > 0.0) {
        return Err(PsError::Arg(format!("time limit {limit}")));
    }
    let gaps = (lambda > 0.0).then(|| Exp::new(lambda).expect("positive rate"));

    let mut heap: BinaryHeap<Reverse<Key>> = initial.iter().map(|&r| Reverse(Key(r))).collect();
    let mut v = 0.0; // attained service of a permanent customer
    let mut w: f64 = initial.iter().sum();
    let mut t = 0.0;
    let mut q = PathBuilder::new();
    let mut wl = PathBuilder::new();
    let mut arrivals = Vec::new();
    let mut sizes = Vec::new();
    let mut departures = Vec::new();
    let mut emptied = 0usize;
    let mut next_arrival = gaps.as_ref().map_or(f64::INFINITY, |g| g.sample(rng));

    let record = |q: &mut PathBuilder, wl: &mut PathBuilder, t: f64, k: usize, w: f64| {
        q.push(t, k as f64, 0.0);
        wl.push(t, w, if k > 0 { -1.0 } else { 0.0 });
    };
    record(&mut q, &mut wl, 0.0, heap.len(), w);
    if heap.is_empty() && matches!(stop, PsStop::UntilEmpty { .. }) {
        return Ok(PsTrace {
            queue_length: q.finish(f64::INFINITY),
            workload: wl.finish(f64::INFINITY),
            arrival_times: arrivals,
            arrival_sizes: sizes,
            departure_times: departures,
            initial: initial.to_vec(),
            completed: true,
            end_time: 0.0,
        });
    }

    loop {
        let k = heap.len();
        let next_departure = heap
            .peek()
            .map_or(f64::INFINITY, |Reverse(Key(f))| t + (f - v) * k as f64);
        let next = next_arrival.min(next_departure);
        if next >= limit {
            let end = limit;
            return Ok(PsTrace {
                queue_length: q.finish(end),
                workload: wl.finish(end),
                arrival_times: arrivals,
                arrival_sizes: sizes,
                departure_times: departures,
                initial: initial.to_vec(),
                completed: matches!(stop, PsStop::Horizon(_)),
                end_time: end,
            });
        }
        if k > 0 {
            v += (next - t) / k as f64;
            w -= next - t;
        }
        t = next;
        if next_departure <= next_arrival {
            let Reverse(Key(f)) = heap.pop().expect("departure needs a customer");
            departures.push(t);
            while heap.peek().is_some_and(|Reverse(Key(g))| *g == f) {
                heap.pop();
                departures.push(t);
            }
            if heap.is_empty() {
                v = 0.0;
                w = 0.0;
                emptied += 1;
            } else {
                // Keep the bookkeeping exact at the departure epoch.
                v = f;
            }
        } else {
            let x = s.sample(rng);
            arrivals.push(t);
            sizes.push(x);
            heap.push(Reverse(Key(v + x)));
            w += x;
            next_arrival = t + gaps.as_ref().expect("arrivals need a rate").sample(rng);
        }
        record(&mut q, &mut wl, t, heap.len(), w);
        if emptied >= target {
            return Ok(PsTrace {
                queue_length: q.finish(f64::INFINITY),
                workload: wl.finish(f64::INFINITY),
                arrival_times: arrivals,
                arrival_sizes: sizes,
                departure_times: departures,
                initial: initial.to_vec(),
                completed: true,
                end_time: t,
            });
        }
    }
}

/// Draws the initial population (`ρ = λ E S` for the stationary start), then
/// runs [`simulate_ps_from`].
pub fn simulate_ps<R: Rng + ?Sized>(
    lambda: f64,
    s: &ServiceDist,
    init: &InitialCondition,
    stop: PsStop,
    rng: &mut R,
) -> Result<PsTrace, PsError> {
    let residuals = make_initial(init, s, lambda * s.mean(), rng)?;
    simulate_ps_from(lambda, s, &residuals, stop, rng)
}

impl PsTrace {
    pub fn departure_times(&self) -> &[f64] {
        &self.departure_times
    }

    /// CSV event log `time,event,q_after,w_after`. Simultaneous departures
    /// produce one row each.
    pub fn to_csv(&self) -> String {
        let mut ev: Vec<(f64, bool, f64)> = self
            .arrival_times
            .iter()
            .zip(&self.arrival_sizes)
            .map(|(&t, &x)| (t, true, x))
            .chain(self.departure_times.iter().map(|&t| (t, false, 0.0)))
            .collect();
        ev.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out = String::from("time,event,q_after,w_after\n");
        let mut k = self.initial.len() as i64;
        for (t, arrival, _) in ev {
            k += if arrival { 1 } else { -1 };
            let w = self.workload.value_at(t);
            let name = if arrival { "arrival" } else { "departure" };
            let _ = writeln!(out, "{t},{name},{k},{w}");
        }
        out
    }
}

/// A completed busy period of the queue-length path.
#[derive(Debug, Clone, PartialEq)]
pub struct BusyCycle {
    pub excursion: Excursion,
    pub start: f64,
    /// Idle time before the next busy period, when the trace shows it.
    pub idle: Option<f64>,
}

/// Completed busy periods in time order, with the idle gap after each.
pub fn split_busy_cycles(tr: &PsTrace) -> Result<Vec<BusyCycle>, PsError> {
    let iv = positive_intervals(&tr.queue_length);
    let mut out = Vec::new();
    for (i, &(a, b, done)) in iv.iter().enumerate() {
        if !done {
            break;
        }
        let excursion = Excursion::new(window(&tr.queue_length, a, b)?)?;
        let idle = iv.get(i + 1).map(|nx| nx.0 - b);
        out.push(BusyCycle {
            excursion,
            start: a,
            idle,
        });
    }
    Ok(out)
}
