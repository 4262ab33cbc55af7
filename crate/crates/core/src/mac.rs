// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// http://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or http://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.
//! DCF CSMA/CA engine.
//!
//! The engine does not step slot by slot. While the medium is idle every
//! contending node counts down on a shared slot grid that starts DIFS after
//! the last busy period, so the next transmission instant is simply the
//! smallest `grid_start + backoff * slot`. Nodes whose counters reach zero
//! on the same slot collide. Counters of the other nodes freeze for the
//! busy period and resume on the next grid.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analytic::MacTiming;
use crate::error::{invalid, Result};
use crate::frame::Frame;
use crate::time::SimTime;

/// Anything the MAC can put on the air.
pub trait AirFrame {
    /// IP packet size in bytes; the MAC overhead is added by [`MacTiming`].
    fn air_size(&self) -> u32;
}

impl AirFrame for Frame {
    fn air_size(&self) -> u32 {
        self.size
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    Ap,
    Station,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeStats {
    pub attempts: u64,
    pub successes: u64,
    pub collisions: u64,
    pub channel_errors: u64,
    pub retry_drops: u64,
    pub queue_drops: u64,
    pub enqueued: u64,
}

#[derive(Debug)]
pub struct MacNode<F> {
    pub role: NodeRole,
    queue: VecDeque<F>,
    capacity: usize,
    cw: u32,
    retries: u32,
    backoff: Option<u32>,
    counting_since: Option<SimTime>,
    pub stats: NodeStats,
}

impl<F> MacNode<F> {
    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn queue(&self) -> impl Iterator<Item = &F> {
        self.queue.iter()
    }

    pub fn contention_window(&self) -> u32 {
        self.cw
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxOutcome {
    Success,
    Collision,
    ChannelError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub start: SimTime,
    pub end: SimTime,
    pub nodes: Vec<usize>,
    pub outcome: TxOutcome,
}

#[derive(Debug)]
pub enum Completion<F> {
    Delivered { node: usize, frame: F, retries: u32 },
    /// Retry limit exhausted.
    Dropped { node: usize, frame: F },
}

#[derive(Debug, Clone, Copy)]
enum Medium {
    Idle { grid_start: SimTime },
    Busy { until: SimTime },
}

pub struct Dcf<F> {
    timing: MacTiming,
    per: f64,
    slot: u64,
    difs: SimTime,
    nodes: Vec<MacNode<F>>,
    medium: Medium,
    current: Option<Transmission>,
    /// `retry_histogram[k]`: frames delivered after `k` retries.
    retry_histogram: Vec<u64>,
}

impl<F: AirFrame> Dcf<F> {
    /// Node 0 is the AP when `with_ap` is set; the others are stations.
    pub fn new(timing: MacTiming, per: f64, capacities: &[usize], with_ap: bool) -> Result<Self> {
        timing.validate()?;
        if !(0.0..1.0).contains(&per) {
            return Err(invalid(format!("PER must be in [0, 1), got {per}")));
        }
        if capacities.contains(&0) {
            return Err(invalid("MAC queue capacity must be >= 1"));
        }
        let nodes = capacities
            .iter()
            .enumerate()
            .map(|(i, &capacity)| MacNode {
                role: if with_ap && i == 0 { NodeRole::Ap } else { NodeRole::Station },
                queue: VecDeque::with_capacity(capacity.min(256)),
                capacity,
                cw: timing.cw_min,
                retries: 0,
                backoff: None,
                counting_since: None,
                stats: NodeStats::default(),
            })
            .collect();
        Ok(Dcf {
            slot: SimTime::from_secs_f64(timing.slot_time).as_nanos(),
            difs: SimTime::from_secs_f64(timing.difs),
            timing,
            per,
            nodes,
            medium: Medium::Idle { grid_start: SimTime::from_secs_f64(timing.difs) },
            current: None,
            retry_histogram: vec![0; timing.retry_limit as usize + 1],
        })
    }

    pub fn timing(&self) -> &MacTiming {
        &self.timing
    }

    pub fn nodes(&self) -> &[MacNode<F>] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &MacNode<F> {
        &self.nodes[i]
    }

    pub fn retry_histogram(&self) -> &[u64] {
        &self.retry_histogram
    }

    pub fn is_busy(&self) -> bool {
        matches!(self.medium, Medium::Busy { .. })
    }

    pub fn current(&self) -> Option<&Transmission> {
        self.current.as_ref()
    }

    /// Queue a frame. A full queue hands the frame back.
    pub fn enqueue<R: Rng>(&mut self, node: usize, frame: F, now: SimTime, rng: &mut R) -> std::result::Result<(), F> {
        let n = &mut self.nodes[node];
        if n.queue.len() >= n.capacity {
            n.stats.queue_drops += 1;
            return Err(frame);
        }
        n.stats.enqueued += 1;
        n.queue.push_back(frame);
        if n.queue.len() == 1 {
            self.activate(node, now, rng);
        }
        Ok(())
    }

    fn draw_backoff<R: Rng>(&mut self, node: usize, rng: &mut R) {
        let n = &mut self.nodes[node];
        if n.backoff.is_none() {
            n.backoff = Some(rng.random_range(0..=n.cw));
        }
    }

    fn activate<R: Rng>(&mut self, node: usize, now: SimTime, rng: &mut R) {
        self.draw_backoff(node, rng);
        if let Medium::Idle { grid_start } = self.medium {
            let start = if now <= grid_start {
                grid_start
            } else {
                let elapsed = (now - grid_start).as_nanos();
                let slots = elapsed.div_ceil(self.slot);
                grid_start + SimTime::from_nanos(slots * self.slot)
            };
            self.nodes[node].counting_since = Some(start);
        }
    }

    fn tx_time(&self, node: &MacNode<F>) -> Option<SimTime> {
        let since = node.counting_since?;
        let backoff = node.backoff? as u64;
        Some(since + SimTime::from_nanos(backoff * self.slot))
    }

    /// When the next transmission starts, if the medium is idle and
    /// someone is contending.
    pub fn next_tx_time(&self) -> Option<SimTime> {
        if self.is_busy() {
            return None;
        }
        self.nodes.iter().filter_map(|n| self.tx_time(n)).min()
    }

    /// Start the transmission due at `now`. Returns `None` if nothing is
    /// due (the caller's schedule went stale).
    pub fn start_tx<R: Rng>(&mut self, now: SimTime, rng: &mut R) -> Option<&Transmission> {
        if self.is_busy() || self.next_tx_time() != Some(now) {
            return None;
        }
        let mut winners = Vec::new();
        for i in 0..self.nodes.len() {
            match self.tx_time(&self.nodes[i]) {
                Some(t) if t == now => winners.push(i),
                Some(_) => {
                    let n = &mut self.nodes[i];
                    let since = n.counting_since.take().expect("counting node");
                    let elapsed = now.saturating_sub(since).as_nanos() / self.slot;
                    let b = n.backoff.as_mut().expect("counting node");
                    *b -= elapsed as u32;
                    debug_assert!(*b >= 1);
                }
                None => {}
            }
        }
        let mut busy = 0.0_f64;
        for &w in &winners {
            let n = &mut self.nodes[w];
            n.stats.attempts += 1;
            n.counting_since = None;
            n.backoff = None;
            let size = n.queue.front().expect("contending node has a frame").air_size();
            busy = busy.max(self.timing.exchange_duration(size));
        }
        let outcome = if winners.len() > 1 {
            TxOutcome::Collision
        } else if self.per > 0.0 && rng.random::<f64>() < self.per {
            TxOutcome::ChannelError
        } else {
            TxOutcome::Success
        };
        let end = now + SimTime::from_secs_f64(busy);
        self.medium = Medium::Busy { until: end };
        self.current = Some(Transmission { start: now, end, nodes: winners, outcome });
        self.current.as_ref()
    }

    /// End of the busy period. Returns the frames that left their queues.
    pub fn finish_tx<R: Rng>(&mut self, now: SimTime, rng: &mut R) -> Vec<Completion<F>> {
        let Some(tx) = self.current.take() else {
            return Vec::new();
        };
        debug_assert!(matches!(self.medium, Medium::Busy { until } if until == now));
        let mut done = Vec::with_capacity(tx.nodes.len());
        for &w in &tx.nodes {
            let retry_limit = self.timing.retry_limit;
            let cw_min = self.timing.cw_min;
            let cw_max = self.timing.cw_max;
            let n = &mut self.nodes[w];
            match tx.outcome {
                TxOutcome::Success => {
                    let frame = n.queue.pop_front().expect("frame in service");
                    n.stats.successes += 1;
                    self.retry_histogram[n.retries as usize] += 1;
                    done.push(Completion::Delivered { node: w, frame, retries: n.retries });
                    n.cw = cw_min;
                    n.retries = 0;
                }
                TxOutcome::Collision | TxOutcome::ChannelError => {
                    if tx.outcome == TxOutcome::Collision {
                        n.stats.collisions += 1;
                    } else {
                        n.stats.channel_errors += 1;
                    }
                    n.retries += 1;
                    if n.retries > retry_limit {
                        let frame = n.queue.pop_front().expect("frame in service");
                        n.stats.retry_drops += 1;
                        done.push(Completion::Dropped { node: w, frame });
                        n.cw = cw_min;
                        n.retries = 0;
                    } else {
                        n.cw = (2 * (n.cw + 1) - 1).min(cw_max);
                    }
                }
            }
        }
        let grid_start = now + self.difs;
        self.medium = Medium::Idle { grid_start };
        for i in 0..self.nodes.len() {
            if !self.nodes[i].queue.is_empty() {
                self.draw_backoff(i, rng);
                self.nodes[i].counting_since = Some(grid_start);
            } else {
                self.nodes[i].counting_since = None;
                self.nodes[i].backoff = None;
            }
        }
        debug_assert!(self.nodes.iter().all(|n| {
            n.cw >= cw_min_of(&self.timing) && n.cw <= self.timing.cw_max && n.backoff.is_none_or(|b| b <= n.cw)
        }));
        done
    }

    pub fn drain_queue(&self, node: usize) -> impl Iterator<Item = &F> {
        self.nodes[node].queue.iter()
    }
}

fn cw_min_of(t: &MacTiming) -> u32 {
    t.cw_min
}

/// A frame of fixed size with no payload, for MAC-only experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawFrame {
    pub size: u32,
}

impl AirFrame for RawFrame {
    fn air_size(&self) -> u32 {
        self.size
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaturationResult {
    pub successes: Vec<u64>,
    pub attempts: Vec<u64>,
    pub collisions: Vec<u64>,
    pub elapsed: SimTime,
    /// Success instants of node 0.
    pub tagged_success_times: Vec<SimTime>,
}

impl SaturationResult {
    pub fn total_successes(&self) -> u64 {
        self.successes.iter().sum()
    }

    pub fn share(&self, node: usize) -> f64 {
        self.successes[node] as f64 / self.total_successes() as f64
    }

    pub fn collision_probability(&self, node: usize) -> f64 {
        self.collisions[node] as f64 / self.attempts[node] as f64
    }
}

/// Every node always has a frame of its given size. Runs until node 0 has
/// completed `tagged_successes` transmissions or all nodes together have
/// completed `total_successes`, whichever is given.
pub fn run_saturated(
    frame_sizes: &[u32],
    timing: MacTiming,
    per: f64,
    stop: SaturationStop,
    seed: u64,
) -> Result<SaturationResult> {
    if frame_sizes.is_empty() || frame_sizes.contains(&0) {
        return Err(invalid("saturation run needs at least one node with frame size > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let caps = vec![1; frame_sizes.len()];
    let mut dcf = Dcf::new(timing, per, &caps, false)?;
    for (i, &size) in frame_sizes.iter().enumerate() {
        let _ = dcf.enqueue(i, RawFrame { size }, SimTime::ZERO, &mut rng);
    }
    let mut tagged = Vec::new();
    let mut total = 0_u64;
    let now = loop {
        let t = dcf.next_tx_time().expect("saturated nodes always contend");
        let end = dcf.start_tx(t, &mut rng).expect("due transmission").end;
        for c in dcf.finish_tx(end, &mut rng) {
            let (node, frame) = match c {
                Completion::Delivered { node, frame, .. } => {
                    total += 1;
                    if node == 0 {
                        tagged.push(end);
                    }
                    (node, frame)
                }
                Completion::Dropped { node, frame } => (node, frame),
            };
            let _ = dcf.enqueue(node, frame, end, &mut rng);
        }
        let finished = match stop {
            SaturationStop::TotalSuccesses(n) => total >= n,
            SaturationStop::TaggedSuccesses(n) => tagged.len() as u64 >= n,
        };
        if finished {
            break end;
        }
    };
    Ok(SaturationResult {
        successes: dcf.nodes.iter().map(|n| n.stats.successes).collect(),
        attempts: dcf.nodes.iter().map(|n| n.stats.attempts).collect(),
        collisions: dcf.nodes.iter().map(|n| n.stats.collisions).collect(),
        elapsed: now,
        tagged_success_times: tagged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaturationStop {
    TotalSuccesses(u64),
    TaggedSuccesses(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleTimeMeasurement {
    /// Mean interval between successes of the tagged station, seconds.
    pub mean: f64,
    pub std_error: f64,
    pub cycles: u64,
    pub collision_probability: f64,
}

/// Two saturated stations, the tagged one sending `p1_size` packets and
/// the other `p2_size`. Measures the tagged station's mean inter-success
/// interval.
pub fn measure_cycle_time(
    p1_size: u32,
    p2_size: u32,
    timing: MacTiming,
    n_cycles: u64,
    seed: u64,
) -> Result<CycleTimeMeasurement> {
    if n_cycles < 10_000 {
        return Err(invalid(format!("need at least 10^4 cycles, got {n_cycles}")));
    }
    let res = run_saturated(&[p1_size, p2_size], timing, 0.0, SaturationStop::TaggedSuccesses(n_cycles + 1), seed)?;
    let gaps: Vec<f64> = res
        .tagged_success_times
        .windows(2)
        .map(|w| (w[1] - w[0]).as_secs_f64())
        .collect();
    let n = gaps.len() as f64;
    let mean = gaps.iter().sum::<f64>() / n;
    let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(CycleTimeMeasurement {
        mean,
        std_error: (var / n).sqrt(),
        cycles: gaps.len() as u64,
        collision_probability: (res.collisions[0] + res.collisions[1]) as f64
            / (res.attempts[0] + res.attempts[1]) as f64,
    })
}
