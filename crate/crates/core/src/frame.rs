// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// http://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or http://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.
use std::fmt;

use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowId(pub u32);

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Direction of the flow's data relative to the wireless stations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Station sends data to a wired host.
    Up,
    /// Wired host sends data to a station.
    Down,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameKind {
    TcpData,
    TcpAck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct TcpFlags {
    pub dup_ack: bool,
    pub syn: bool,
    pub fin: bool,
}

impl TcpFlags {
    pub const NONE: TcpFlags = TcpFlags { dup_ack: false, syn: false, fin: false };

    pub fn any(&self) -> bool {
        self.dup_ack || self.syn || self.fin
    }
}

/// A TCP segment as seen by the MAC. Sequence and acknowledgment numbers
/// count packets; `ack_no` is the next packet the receiver expects.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub flow: FlowId,
    pub direction: Direction,
    pub kind: FrameKind,
    /// IP packet size in bytes, MAC overhead excluded.
    pub size: u32,
    pub seq: u64,
    pub ack_no: u64,
    /// Receiver window in packets.
    pub advertised_window: u32,
    pub flags: TcpFlags,
    /// Timestamp option: sender clock at emission, and the echoed value.
    pub ts_val: SimTime,
    pub ts_ecr: Option<SimTime>,
    pub enqueue_time: SimTime,
}

impl Frame {
    pub fn is_data(&self) -> bool {
        self.kind == FrameKind::TcpData
    }

    pub fn is_ack(&self) -> bool {
        self.kind == FrameKind::TcpAck
    }
}
