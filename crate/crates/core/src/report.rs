// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// http://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or http://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.
//! What a simulation run produces.

use crate::accf::{AccfDecision, AccfStats};
use crate::fcwa::{FcwaStats, WindowRecord};
use crate::frame::{Direction, FlowId};
use crate::mac::NodeStats;
use crate::scenario::{ControlBlock, FlowKind};
use crate::tcp::{ReceiverStats, SenderStats};

#[derive(Debug, Clone, PartialEq)]
pub struct FlowReport {
    pub id: FlowId,
    pub direction: Direction,
    pub kind: FlowKind,
    pub ld: f64,
    pub window: u32,
    pub start: f64,
    pub b: u32,
    /// New in-order packets handed to the receiving application.
    pub delivered_packets: u64,
    pub delivered_bytes: u64,
    /// Delivered bytes per bin of `RunReport::bin_width` seconds.
    pub bins: Vec<u64>,
    /// Frames of this flow (data or ACK) refused by the full AP queue.
    pub ap_drops: u64,
    /// Frames refused by the station's full queue.
    pub sta_drops: u64,
    /// Frames discarded after exhausting MAC retries.
    pub retry_drops: u64,
    /// Frames accepted into a MAC queue.
    pub mac_enqueued: u64,
    /// Data frames offered to a MAC queue after the warm-up.
    pub data_offered_steady: u64,
    /// Of those, refused by a full queue.
    pub data_lost_steady: u64,
    /// Packets the application generated (paced sources only).
    pub app_packets: u64,
    /// Seconds from start to the final acknowledgment, for finite transfers.
    pub completion_time: Option<f64>,
    pub sender: SenderStats,
    pub receiver: ReceiverStats,
    pub final_cwnd: f64,
}

impl FlowReport {
    /// Goodput in bits per second over `[from, to)`, whole bins only.
    pub fn throughput_bps(&self, bin_width: f64, from: f64, to: f64) -> f64 {
        let first = (from / bin_width).ceil() as usize;
        let last = ((to / bin_width).floor() as usize).min(self.bins.len());
        if last <= first {
            return 0.0;
        }
        let bytes: u64 = self.bins[first..last].iter().sum();
        bytes as f64 * 8.0 / ((last - first) as f64 * bin_width)
    }

    /// Steady-state MAC queue loss ratio of this flow's data packets.
    /// Retry-limit discards are not queue losses and are not counted.
    pub fn data_loss_rate(&self) -> f64 {
        if self.data_offered_steady == 0 {
            0.0
        } else {
            self.data_lost_steady as f64 / self.data_offered_steady as f64
        }
    }

    /// MAC-level loss ratio: frames lost to full queues or retry
    /// exhaustion over frames offered to a MAC queue.
    pub fn mac_loss_rate(&self) -> f64 {
        let offered = self.mac_enqueued + self.ap_drops + self.sta_drops;
        if offered == 0 {
            return 0.0;
        }
        (self.ap_drops + self.sta_drops + self.retry_drops) as f64 / offered as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub control: ControlBlock,
    pub duration: f64,
    pub warmup: f64,
    pub bin_width: f64,
    pub flows: Vec<FlowReport>,
    pub ap_enqueued: u64,
    pub ap_queue_drops: u64,
    /// The same two counters restricted to arrivals after the warm-up.
    pub ap_enqueued_steady: u64,
    pub ap_queue_drops_steady: u64,
    /// `retry_histogram[k]`: frames delivered after `k` MAC retries.
    pub retry_histogram: Vec<u64>,
    /// Node 0 is the AP, node `i + 1` the station of flow `i`.
    pub node_stats: Vec<NodeStats>,
    pub window_log: Vec<WindowRecord>,
    pub fcwa_stats: Option<FcwaStats>,
    pub accf_stats: Option<AccfStats>,
    pub accf_decisions: Vec<AccfDecision>,
    pub events: u64,
}

impl RunReport {
    /// Per-flow goodput over the steady-state window `[warmup, duration)`.
    pub fn steady_throughputs(&self) -> Vec<f64> {
        self.flows.iter().map(|f| f.throughput_bps(self.bin_width, self.warmup, self.duration)).collect()
    }

    pub fn total_throughput(&self, direction: Option<Direction>) -> f64 {
        self.flows
            .iter()
            .filter(|f| direction.is_none_or(|d| f.direction == d))
            .map(|f| f.throughput_bps(self.bin_width, self.warmup, self.duration))
            .fold(0.0, |a, x| a + x)
    }

    /// AP queue drops over frames offered to the AP queue.
    pub fn ap_drop_ratio(&self) -> f64 {
        let offered = self.ap_enqueued + self.ap_queue_drops;
        if offered == 0 {
            0.0
        } else {
            self.ap_queue_drops as f64 / offered as f64
        }
    }

    /// AP drop ratio for arrivals after the warm-up.
    pub fn steady_ap_drop_ratio(&self) -> f64 {
        let offered = self.ap_enqueued_steady + self.ap_queue_drops_steady;
        if offered == 0 {
            0.0
        } else {
            self.ap_queue_drops_steady as f64 / offered as f64
        }
    }
}
