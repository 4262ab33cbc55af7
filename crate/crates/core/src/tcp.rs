// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// http://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or http://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.
//! Packet-granular TCP NewReno sender and delayed-ACK receiver.
//!
//! Sequence numbers count whole packets. Timers are deadlines the owner
//! polls; the sender and receiver never schedule anything themselves.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::frame::{Direction, FlowId, Frame, FrameKind, TcpFlags};
use crate::time::SimTime;

/// What a window increase is proportional to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowGrowth {
    /// Packets newly acknowledged by the ACK.
    PerPacket,
    /// ACKs received, whatever they cover.
    PerAck,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TcpConfig {
    pub initial_cwnd: f64,
    pub growth: WindowGrowth,
    pub initial_rto: f64,
    pub min_rto: f64,
    pub max_rto: f64,
    pub delayed_ack_timeout: f64,
    pub data_size: u32,
    pub ack_size: u32,
}

impl Default for TcpConfig {
    fn default() -> Self {
        TcpConfig {
            initial_cwnd: 2.0,
            growth: WindowGrowth::PerAck,
            initial_rto: 1.0,
            min_rto: 0.2,
            max_rto: 64.0,
            delayed_ack_timeout: 0.1,
            data_size: 1500,
            ack_size: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    SlowStart,
    CongestionAvoidance,
    FastRecovery,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SenderStats {
    pub segments_sent: u64,
    pub retransmissions: u64,
    pub timeouts: u64,
    pub fast_retransmits: u64,
}

#[derive(Debug, Clone)]
pub struct TcpSender {
    flow: FlowId,
    direction: Direction,
    cfg: TcpConfig,
    pub cwnd: f64,
    pub ssthresh: f64,
    /// Receiver window from the most recent ACK.
    pub adv_window: u32,
    next_seq: u64,
    snd_una: u64,
    snd_max: u64,
    dup_acks: u32,
    recover: u64,
    phase: Phase,
    /// Timeout before backoff: initial value, then \`srtt + 4 rttvar\`.
    base_rto: f64,
    backoff: u32,
    srtt: Option<f64>,
    rttvar: f64,
    /// Segment being timed for an RTT sample (Karn: never a retransmission).
    timed: Option<(u64, SimTime)>,
    rto_deadline: Option<SimTime>,
    /// Packets the application has handed over; `None` is an endless source.
    app_limit: Option<u64>,
    fin_at: Option<u64>,
    last_ack_ts: Option<SimTime>,
    pub stats: SenderStats,
}

impl TcpSender {
    pub fn new(flow: FlowId, direction: Direction, adv_window: u32, cfg: TcpConfig) -> Self {
        let adv_window = adv_window.max(1);
        TcpSender {
            flow,
            direction,
            cfg,
            cwnd: cfg.initial_cwnd.min(f64::from(adv_window)).max(1.0),
            ssthresh: f64::from(adv_window).max(2.0),
            adv_window,
            next_seq: 0,
            snd_una: 0,
            snd_max: 0,
            dup_acks: 0,
            recover: 0,
            phase: Phase::SlowStart,
            base_rto: cfg.initial_rto,
            backoff: 1,
            srtt: None,
            rttvar: 0.0,
            timed: None,
            rto_deadline: None,
            app_limit: None,
            fin_at: None,
            last_ack_ts: None,
            stats: SenderStats::default(),
        }
    }

    /// A transfer of exactly `packets` packets; the last one carries FIN.
    pub fn with_finite_transfer(mut self, packets: u64) -> Self {
        self.app_limit = Some(packets);
        self.fin_at = Some(packets);
        self
    }

    /// Application-paced source: nothing to send until [`Self::offer`].
    pub fn with_paced_source(mut self) -> Self {
        self.app_limit = Some(0);
        self
    }

    pub fn offer(&mut self, packets: u64) {
        if let Some(limit) = self.app_limit.as_mut() {
            *limit += packets;
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Current timeout including backoff.
    pub fn rto(&self) -> f64 {
        (self.base_rto * f64::from(self.backoff)).clamp(self.cfg.min_rto, self.cfg.max_rto)
    }

    pub fn srtt(&self) -> Option<f64> {
        self.srtt
    }

    pub fn rto_deadline(&self) -> Option<SimTime> {
        self.rto_deadline
    }

    pub fn highest_acked(&self) -> u64 {
        self.snd_una
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn in_flight(&self) -> u64 {
        self.next_seq - self.snd_una
    }

    pub fn dup_ack_count(&self) -> u32 {
        self.dup_acks
    }

    /// Usable window: `min(cwnd, advertised window)` in whole packets.
    pub fn window(&self) -> u64 {
        (self.cwnd.floor() as u64).min(u64::from(self.adv_window)).max(1)
    }

    /// Finite transfer fully acknowledged.
    pub fn is_complete(&self) -> bool {
        self.fin_at.is_some_and(|n| self.snd_una >= n)
    }

    /// Data the application has not yet had acknowledged.
    pub fn backlog(&self) -> u64 {
        self.app_limit.map_or(u64::MAX, |l| l.saturating_sub(self.snd_una))
    }

    fn data_frame(&mut self, seq: u64, now: SimTime) -> Frame {
        self.stats.segments_sent += 1;
        if seq < self.snd_max {
            self.stats.retransmissions += 1;
            // Karn: an ACK covering a retransmitted segment is ambiguous.
            if self.timed.is_some_and(|(t, _)| t >= seq) {
                self.timed = None;
            }
        }
        let mut flags = TcpFlags::NONE;
        flags.fin = self.fin_at == Some(seq + 1);
        Frame {
            flow: self.flow,
            direction: self.direction,
            kind: FrameKind::TcpData,
            size: self.cfg.data_size,
            seq,
            ack_no: 0,
            advertised_window: 0,
            flags,
            ts_val: now,
            ts_ecr: self.last_ack_ts,
            enqueue_time: now,
        }
    }

    fn arm_timer(&mut self, now: SimTime) {
        self.rto_deadline = Some(now + SimTime::from_secs_f64(self.rto()));
    }

    /// Emit data while the window allows.
    pub fn on_send_opportunity(&mut self, now: SimTime) -> Vec<Frame> {
        let limit = self.snd_una + self.window();
        let limit = self.app_limit.map_or(limit, |a| limit.min(a));
        let mut out = Vec::new();
        while self.next_seq < limit {
            let seq = self.next_seq;
            if seq >= self.snd_max && self.timed.is_none() {
                self.timed = Some((seq, now));
            }
            out.push(self.data_frame(seq, now));
            self.next_seq += 1;
            self.snd_max = self.snd_max.max(self.next_seq);
        }
        if !out.is_empty() && self.rto_deadline.is_none() {
            self.arm_timer(now);
        }
        out
    }

    fn sample_rtt(&mut self, sample: f64) {
        match self.srtt {
            None => {
                self.srtt = Some(sample);
                self.rttvar = sample / 2.0;
            }
            Some(srtt) => {
                self.rttvar = 0.75 * self.rttvar + 0.25 * (srtt - sample).abs();
                self.srtt = Some(0.875 * srtt + 0.125 * sample);
            }
        }
        self.base_rto = self.srtt.unwrap_or(sample) + 4.0 * self.rttvar;
        self.backoff = 1;
    }

    /// Process an ACK. Returns a retransmission when one is triggered;
    /// new data is released by the following [`Self::on_send_opportunity`].
    pub fn on_ack(&mut self, ack: &Frame, now: SimTime) -> Result<Option<Frame>> {
        if ack.ack_no > self.snd_max {
            return Err(Error::Protocol {
                flow: self.flow.0,
                msg: format!("ack {} beyond highest sent {}", ack.ack_no, self.snd_max),
            });
        }
        self.adv_window = ack.advertised_window.max(1);
        self.cwnd = self.cwnd.min(f64::from(self.adv_window));
        self.last_ack_ts = Some(ack.ts_val);

        if ack.ack_no > self.snd_una {
            let newly = match self.cfg.growth {
                WindowGrowth::PerPacket => (ack.ack_no - self.snd_una) as f64,
                WindowGrowth::PerAck => 1.0,
            };
            self.snd_una = ack.ack_no;
            self.next_seq = self.next_seq.max(self.snd_una);
            if let Some((seq, sent)) = self.timed {
                if ack.ack_no > seq {
                    self.timed = None;
                    self.sample_rtt(now.secs_since(sent));
                }
            }
            let mut retransmit = None;
            match self.phase {
                Phase::FastRecovery => {
                    if ack.ack_no >= self.recover {
                        self.phase = Phase::CongestionAvoidance;
                        self.cwnd = self.ssthresh;
                    } else {
                        let seq = self.snd_una;
                        retransmit = Some(self.data_frame(seq, now));
                    }
                }
                Phase::SlowStart => {
                    self.cwnd += newly;
                    if self.cwnd >= self.ssthresh {
                        self.phase = Phase::CongestionAvoidance;
                    }
                }
                Phase::CongestionAvoidance => {
                    self.cwnd += newly / self.cwnd;
                }
            }
            self.cwnd = self.cwnd.min(f64::from(self.adv_window)).max(1.0);
            self.dup_acks = 0;
            if self.snd_una >= self.snd_max {
                self.rto_deadline = None;
            } else {
                self.arm_timer(now);
            }
            return Ok(retransmit);
        }

        if ack.ack_no == self.snd_una && self.snd_max > self.snd_una {
            self.dup_acks += 1;
            if self.dup_acks == 3 && self.phase != Phase::FastRecovery && self.snd_una >= self.recover {
                self.ssthresh = (self.cwnd / 2.0).max(2.0);
                self.cwnd = self.ssthresh.min(f64::from(self.adv_window));
                self.recover = self.snd_max;
                self.phase = Phase::FastRecovery;
                self.stats.fast_retransmits += 1;
                let seq = self.snd_una;
                let frame = self.data_frame(seq, now);
                self.arm_timer(now);
                return Ok(Some(frame));
            }
        }
        Ok(None)
    }

    /// Retransmission timer expiry: collapse to one packet, back off the
    /// timer and go back to the first unacknowledged packet.
    pub fn on_timeout(&mut self, now: SimTime) {
        if self.snd_una >= self.snd_max {
            self.rto_deadline = None;
            return;
        }
        self.stats.timeouts += 1;
        self.ssthresh = (self.cwnd / 2.0).max(2.0);
        self.cwnd = 1.0;
        self.phase = Phase::SlowStart;
        if self.rto() < self.cfg.max_rto {
            self.backoff *= 2;
        }
        self.timed = None;
        self.recover = self.snd_max;
        self.next_seq = self.snd_una;
        self.dup_acks = 0;
        self.arm_timer(now);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReceiverStats {
    pub segments_received: u64,
    pub duplicates: u64,
    pub acks_sent: u64,
    pub timer_acks: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataOutcome {
    pub ack: Option<Frame>,
    /// In-order packets newly handed to the application.
    pub delivered: u64,
}

#[derive(Debug, Clone)]
pub struct TcpReceiver {
    flow: FlowId,
    direction: Direction,
    b: u32,
    adv_window: u32,
    ack_size: u32,
    delayed_ack_timeout: f64,
    rcv_next: u64,
    out_of_order: BTreeSet<u64>,
    pending_unacked: u32,
    delack_deadline: Option<SimTime>,
    last_ts: Option<SimTime>,
    pub stats: ReceiverStats,
}

impl TcpReceiver {
    pub fn new(flow: FlowId, direction: Direction, b: u32, adv_window: u32, cfg: &TcpConfig) -> Self {
        TcpReceiver {
            flow,
            direction,
            b: b.max(1),
            adv_window,
            ack_size: cfg.ack_size,
            delayed_ack_timeout: cfg.delayed_ack_timeout,
            rcv_next: 0,
            out_of_order: BTreeSet::new(),
            pending_unacked: 0,
            delack_deadline: None,
            last_ts: None,
            stats: ReceiverStats::default(),
        }
    }

    pub fn rcv_next(&self) -> u64 {
        self.rcv_next
    }

    pub fn pending_unacked(&self) -> u32 {
        self.pending_unacked
    }

    pub fn delack_deadline(&self) -> Option<SimTime> {
        self.delack_deadline
    }

    fn ack(&mut self, flags: TcpFlags, now: SimTime) -> Frame {
        self.pending_unacked = 0;
        self.delack_deadline = None;
        self.stats.acks_sent += 1;
        Frame {
            flow: self.flow,
            direction: self.direction,
            kind: FrameKind::TcpAck,
            size: self.ack_size,
            seq: 0,
            ack_no: self.rcv_next,
            advertised_window: self.adv_window,
            flags,
            ts_val: now,
            ts_ecr: self.last_ts,
            enqueue_time: now,
        }
    }

    pub fn on_data(&mut self, data: &Frame, now: SimTime) -> DataOutcome {
        self.stats.segments_received += 1;
        self.last_ts = Some(data.ts_val);
        let dup = TcpFlags { dup_ack: true, ..TcpFlags::NONE };
        if data.seq == self.rcv_next {
            let filled_hole = !self.out_of_order.is_empty();
            self.rcv_next += 1;
            while self.out_of_order.remove(&self.rcv_next) {
                self.rcv_next += 1;
            }
            let delivered = self.rcv_next - data.seq;
            self.pending_unacked += 1;
            let ack = if data.flags.fin {
                Some(self.ack(TcpFlags { fin: true, ..TcpFlags::NONE }, now))
            } else if filled_hole || self.pending_unacked >= self.b {
                Some(self.ack(TcpFlags::NONE, now))
            } else {
                if self.delack_deadline.is_none() {
                    self.delack_deadline = Some(now + SimTime::from_secs_f64(self.delayed_ack_timeout));
                }
                None
            };
            DataOutcome { ack, delivered }
        } else if data.seq > self.rcv_next {
            self.out_of_order.insert(data.seq);
            DataOutcome { ack: Some(self.ack(dup, now)), delivered: 0 }
        } else {
            self.stats.duplicates += 1;
            DataOutcome { ack: Some(self.ack(dup, now)), delivered: 0 }
        }
    }

    pub fn on_delack_timer(&mut self, now: SimTime) -> Option<Frame> {
        if self.delack_deadline != Some(now) || self.pending_unacked == 0 {
            return None;
        }
        self.stats.timer_acks += 1;
        Some(self.ack(TcpFlags::NONE, now))
    }
}
