// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// http://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or http://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.
//! Fair congestion window assignment at the AP.
//!
//! The AP learns each flow's wired delay and delayed-ACK factor from the
//! packets it relays, computes the per-flow window limit that keeps its
//! own queue from overflowing, and caps the advertised window of every
//! relayed ACK to it.

use std::collections::VecDeque;

use crate::analytic::{ct_ap_from_table, w_lim_with_ct_ap, CycleTimeTable, MacTiming, TrafficMix};
use crate::error::{invalid, Result};
use crate::frame::{Direction, FlowId, Frame};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CtMode {
    /// AP cycle time from the two-station model.
    Model,
    /// Mean of the last `window` gaps between AP successes while backlogged.
    Measured { window: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FcwaConfig {
    pub bs_ap: f64,
    pub timing: MacTiming,
    pub data_size: u32,
    pub ack_size: u32,
    pub ewma_weight: f64,
    /// Departures not matched within this many seconds are forgotten.
    pub sample_timeout: f64,
    /// Delay samples above this multiple of the estimate are discarded.
    pub outlier_factor: f64,
    /// A flow not seen for this long stops counting towards the mix.
    pub active_timeout: f64,
    pub ct_mode: CtMode,
}

impl FcwaConfig {
    pub fn new(bs_ap: u32, timing: MacTiming, data_size: u32, ack_size: u32) -> Self {
        FcwaConfig {
            bs_ap: f64::from(bs_ap),
            timing,
            data_size,
            ack_size,
            ewma_weight: 0.1,
            sample_timeout: 10.0,
            outlier_factor: 3.0,
            active_timeout: 5.0,
            ct_mode: CtMode::Model,
        }
    }
}

/// Where a relayed packet is headed relative to the AP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hop {
    ToWired,
    FromWired,
}

#[derive(Debug, Clone)]
pub struct FlowProfile {
    pub flow: FlowId,
    pub direction: Direction,
    /// One-way wired delay, seconds.
    pub ld_estimate: Option<f64>,
    pub b_estimate: Option<f64>,
    pub ld_samples: u64,
    pub b_samples: u64,
    last_ack_no: Option<u64>,
    last_ack_flagged: bool,
    last_seen: SimTime,
    finished: bool,
    /// (match key, departure time) of packets sent into the wired link.
    pending: VecDeque<(u64, SimTime)>,
}

const PENDING_CAP: usize = 512;

impl FlowProfile {
    fn new(flow: FlowId, direction: Direction, now: SimTime) -> Self {
        FlowProfile {
            flow,
            direction,
            ld_estimate: None,
            b_estimate: None,
            ld_samples: 0,
            b_samples: 0,
            last_ack_no: None,
            last_ack_flagged: false,
            last_seen: now,
            finished: false,
            pending: VecDeque::new(),
        }
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowRecord {
    pub time: SimTime,
    pub flow: FlowId,
    pub w_lim: f64,
    pub n_up: u32,
    pub n_down: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FcwaStats {
    pub rewritten: u64,
    /// ACKs relayed unmodified because no delay estimate existed yet.
    pub passed_through: u64,
    /// ACKs whose advertised window was actually lowered.
    pub reduced: u64,
}

#[derive(Debug, Clone)]
pub struct Fcwa {
    cfg: FcwaConfig,
    table: CycleTimeTable,
    profiles: Vec<Option<FlowProfile>>,
    ap_gaps: VecDeque<f64>,
    ap_gap_sum: f64,
    last_ap_success: Option<SimTime>,
    ap_backlogged: bool,
    log: Vec<WindowRecord>,
    last_logged: Vec<Option<u32>>,
    pub stats: FcwaStats,
}

impl Fcwa {
    pub fn new(cfg: FcwaConfig) -> Result<Self> {
        if !(cfg.bs_ap >= 1.0) {
            return Err(invalid("AP buffer must hold at least one packet"));
        }
        if !(cfg.ewma_weight > 0.0 && cfg.ewma_weight <= 1.0) {
            return Err(invalid(format!("EWMA weight must be in (0, 1], got {}", cfg.ewma_weight)));
        }
        if let CtMode::Measured { window } = cfg.ct_mode {
            if window == 0 {
                return Err(invalid("measurement window must be >= 1"));
            }
        }
        let table = CycleTimeTable::compute(cfg.data_size, cfg.ack_size, &cfg.timing)?;
        Ok(Fcwa {
            cfg,
            table,
            profiles: Vec::new(),
            ap_gaps: VecDeque::new(),
            ap_gap_sum: 0.0,
            last_ap_success: None,
            ap_backlogged: false,
            log: Vec::new(),
            last_logged: Vec::new(),
            stats: FcwaStats::default(),
        })
    }

    pub fn profile(&self, flow: FlowId) -> Option<&FlowProfile> {
        self.profiles.get(flow.0 as usize)?.as_ref()
    }

    pub fn window_log(&self) -> &[WindowRecord] {
        &self.log
    }

    fn profile_mut(&mut self, flow: FlowId, direction: Direction, now: SimTime) -> &mut FlowProfile {
        let idx = flow.0 as usize;
        if self.profiles.len() <= idx {
            self.profiles.resize_with(idx + 1, || None);
        }
        self.profiles[idx].get_or_insert_with(|| FlowProfile::new(flow, direction, now))
    }

    /// Record a packet relayed by the AP.
    pub fn observe(&mut self, packet: &Frame, hop: Hop, now: SimTime) {
        let cfg = self.cfg;
        let p = self.profile_mut(packet.flow, packet.direction, now);
        p.last_seen = now;
        while p.pending.front().is_some_and(|&(_, t)| now.secs_since(t) > cfg.sample_timeout) {
            p.pending.pop_front();
        }
        if packet.is_ack() {
            if packet.flags.fin {
                p.finished = true;
            }
            update_b(p, packet, cfg.ewma_weight);
        }
        // Uplink flows pair data sent to the wire with the ACK that
        // acknowledges it; downlink flows pair an ACK with the data that
        // echoes its timestamp.
        let (departure_key, arrival_key) = match (packet.direction, packet.is_data()) {
            (Direction::Up, true) => (Some(packet.seq + 1), None),
            (Direction::Up, false) => (None, Some(packet.ack_no)),
            (Direction::Down, false) => (Some(packet.ts_val.as_nanos()), None),
            (Direction::Down, true) => (None, packet.ts_ecr.map(SimTime::as_nanos)),
        };
        match hop {
            Hop::ToWired => {
                if let Some(key) = departure_key {
                    if let Some(e) = p.pending.iter_mut().find(|e| e.0 == key) {
                        e.1 = now;
                    } else {
                        if p.pending.len() >= PENDING_CAP {
                            p.pending.pop_front();
                        }
                        p.pending.push_back((key, now));
                    }
                }
            }
            Hop::FromWired => {
                let Some(key) = arrival_key else { return };
                let Some(pos) = p.pending.iter().position(|e| e.0 == key) else { return };
                let (_, departed) = p.pending.remove(pos).expect("position is in range");
                let ld = now.secs_since(departed) / 2.0;
                match p.ld_estimate {
                    None => p.ld_estimate = Some(ld),
                    Some(est) if est > 0.0 && ld > cfg.outlier_factor * est => return,
                    Some(est) => p.ld_estimate = Some((1.0 - cfg.ewma_weight) * est + cfg.ewma_weight * ld),
                }
                p.ld_samples += 1;
            }
        }
    }

    /// Note a successful AP transmission; `backlogged` tells whether the AP
    /// queue still holds frames afterwards.
    pub fn observe_ap_success(&mut self, now: SimTime, backlogged: bool) {
        let CtMode::Measured { window } = self.cfg.ct_mode else { return };
        if let (Some(last), true) = (self.last_ap_success, self.ap_backlogged) {
            let gap = now.secs_since(last);
            self.ap_gaps.push_back(gap);
            self.ap_gap_sum += gap;
            if self.ap_gaps.len() > window {
                self.ap_gap_sum -= self.ap_gaps.pop_front().unwrap_or(0.0);
            }
        }
        self.last_ap_success = Some(now);
        self.ap_backlogged = backlogged;
    }

    pub fn measured_ct_ap(&self) -> Option<f64> {
        (!self.ap_gaps.is_empty()).then(|| self.ap_gap_sum / self.ap_gaps.len() as f64)
    }

    /// Current traffic mix as seen from the flow table.
    pub fn current_mix(&self, now: SimTime) -> TrafficMix {
        let mut n_up = 0;
        let mut n_down = 0;
        let mut b_sum = 0.0;
        let mut b_n = 0u32;
        for p in self.profiles.iter().flatten() {
            if p.finished || now.secs_since(p.last_seen) > self.cfg.active_timeout {
                continue;
            }
            match p.direction {
                Direction::Up => n_up += 1,
                Direction::Down => n_down += 1,
            }
            if let Some(b) = p.b_estimate {
                b_sum += b;
                b_n += 1;
            }
        }
        let b = if b_n == 0 { 1.0 } else { (b_sum / f64::from(b_n)).max(1.0) };
        TrafficMix { n_up, n_down, b, data_size: self.cfg.data_size, ack_size: self.cfg.ack_size }
    }

    /// Window limit for a flow, if its wired delay has been estimated.
    pub fn window_limit(&self, flow: FlowId, now: SimTime) -> Option<f64> {
        let ld = self.profile(flow)?.ld_estimate?;
        let mix = self.current_mix(now);
        let ct = match self.cfg.ct_mode {
            CtMode::Measured { .. } => self.measured_ct_ap(),
            CtMode::Model => None,
        };
        let ct = match ct {
            Some(ct) => ct,
            None => ct_ap_from_table(&mix, &self.table).ok()?,
        };
        Some(w_lim_with_ct_ap(ld, &mix, self.cfg.bs_ap, ct).ok()?.w_lim)
    }

    /// Cap the advertised window of a relayed ACK.
    pub fn rewrite_window(&mut self, mut ack: Frame, now: SimTime) -> Frame {
        let Some(w) = self.window_limit(ack.flow, now) else {
            self.stats.passed_through += 1;
            return ack;
        };
        let cap = (w.floor() as u32).max(1);
        self.stats.rewritten += 1;
        if cap < ack.advertised_window {
            ack.advertised_window = cap;
            self.stats.reduced += 1;
        }
        let idx = ack.flow.0 as usize;
        if self.last_logged.len() <= idx {
            self.last_logged.resize(idx + 1, None);
        }
        if self.last_logged[idx] != Some(cap) {
            self.last_logged[idx] = Some(cap);
            let mix = self.current_mix(now);
            self.log.push(WindowRecord { time: now, flow: ack.flow, w_lim: w, n_up: mix.n_up, n_down: mix.n_down });
        }
        ack
    }
}

fn update_b(p: &mut FlowProfile, ack: &Frame, weight: f64) {
    let flagged = ack.flags.dup_ack;
    if let Some(prev) = p.last_ack_no {
        // A jump right after a duplicate ACK covers a repaired hole, not
        // the receiver's ACK spacing.
        if ack.ack_no > prev && !flagged && !p.last_ack_flagged {
            let sample = (ack.ack_no - prev) as f64;
            p.b_estimate = Some(match p.b_estimate {
                None => sample,
                Some(b) => (1.0 - weight) * b + weight * sample,
            });
            p.b_samples += 1;
        }
    }
    if p.last_ack_no.is_none_or(|prev| ack.ack_no >= prev) {
        p.last_ack_no = Some(ack.ack_no);
    }
    p.last_ack_flagged = flagged;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{FrameKind, TcpFlags};

    fn t(s: f64) -> SimTime {
        SimTime::from_secs_f64(s)
    }

    fn frame(flow: u32, direction: Direction, kind: FrameKind) -> Frame {
        Frame {
            flow: FlowId(flow),
            direction,
            kind,
            size: if kind == FrameKind::TcpData { 1500 } else { 40 },
            seq: 0,
            ack_no: 0,
            advertised_window: 42,
            flags: TcpFlags::NONE,
            ts_val: SimTime::ZERO,
            ts_ecr: None,
            enqueue_time: SimTime::ZERO,
        }
    }

    fn fcwa() -> Fcwa {
        Fcwa::new(FcwaConfig::new(100, MacTiming::default(), 1500, 40)).unwrap()
    }

    /// Uplink flow: data goes out at `t`, its ACK returns after 2*ld.
    fn uplink_round(f: &mut Fcwa, flow: u32, seq: u64, at: f64, ld: f64, b: u64) {
        let mut d = frame(flow, Direction::Up, FrameKind::TcpData);
        d.seq = seq;
        f.observe(&d, Hop::ToWired, t(at));
        if (seq + 1).is_multiple_of(b) {
            let mut a = frame(flow, Direction::Up, FrameKind::TcpAck);
            a.ack_no = seq + 1;
            f.observe(&a, Hop::FromWired, t(at + 2.0 * ld));
        }
    }

    #[test]
    fn learns_uplink_delay_and_b() {
        let mut f = fcwa();
        for seq in 0..40 {
            uplink_round(&mut f, 0, seq, seq as f64 * 0.001, 0.050, 2);
        }
        let p = f.profile(FlowId(0)).unwrap();
        assert!((p.ld_estimate.unwrap() - 0.050).abs() < 0.0025);
        assert!(p.ld_samples >= 19);
        assert!((p.b_estimate.unwrap() - 2.0).abs() < 0.1);
    }

    #[test]
    fn learns_downlink_delay() {
        let mut f = fcwa();
        for i in 0..25 {
            let now = i as f64 * 0.01;
            let mut a = frame(1, Direction::Down, FrameKind::TcpAck);
            a.ack_no = i + 1;
            a.ts_val = t(now - 0.001);
            f.observe(&a, Hop::ToWired, t(now));
            let mut d = frame(1, Direction::Down, FrameKind::TcpData);
            d.ts_ecr = Some(a.ts_val);
            f.observe(&d, Hop::FromWired, t(now + 0.1));
        }
        let p = f.profile(FlowId(1)).unwrap();
        assert!((p.ld_estimate.unwrap() - 0.05).abs() < 1e-9);
        assert!((p.b_estimate.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stale_departures_are_dropped() {
        let mut f = fcwa();
        uplink_round(&mut f, 0, 0, 0.0, 6.0, 1);
        assert_eq!(f.profile(FlowId(0)).unwrap().ld_samples, 0);
    }

    #[test]
    fn no_estimate_passes_through() {
        let mut f = fcwa();
        let a = frame(0, Direction::Up, FrameKind::TcpAck);
        assert_eq!(f.rewrite_window(a, t(0.0)), a);
        assert_eq!(f.stats.passed_through, 1);
    }

    #[test]
    fn zero_delay_gives_buffer_share() {
        // Five flows each way at zero wired delay: 100 / (5 + 5) = 10.
        let mut f = fcwa();
        for flow in 0..10 {
            let dir = if flow < 5 { Direction::Up } else { Direction::Down };
            let p = f.profile_mut(FlowId(flow), dir, t(0.0));
            p.ld_estimate = Some(0.0);
            p.b_estimate = Some(1.0);
        }
        let ack = f.rewrite_window(frame(0, Direction::Up, FrameKind::TcpAck), t(0.0));
        assert_eq!(ack.advertised_window, 10);
        let mut small = frame(6, Direction::Down, FrameKind::TcpAck);
        small.advertised_window = 4;
        assert_eq!(f.rewrite_window(small, t(0.0)).advertised_window, 4);
    }

    #[test]
    fn limit_tracks_flow_count() {
        let mut f = fcwa();
        for flow in 0..4 {
            let p = f.profile_mut(FlowId(flow), Direction::Down, t(0.0));
            p.ld_estimate = Some(0.0);
        }
        assert!((f.window_limit(FlowId(0), t(0.0)).unwrap() - 25.0).abs() < 1e-9);
        f.profiles[3].as_mut().unwrap().finished = true;
        assert!((f.window_limit(FlowId(0), t(0.0)).unwrap() - 100.0 / 3.0).abs() < 1e-9);
        // Everyone silent for longer than the activity timeout.
        assert!(f.window_limit(FlowId(0), t(5.5)).is_none());
    }

    #[test]
    fn measured_cycle_time() {
        let cfg = FcwaConfig { ct_mode: CtMode::Measured { window: 3 }, ..FcwaConfig::new(100, MacTiming::default(), 1500, 40) };
        let mut f = Fcwa::new(cfg).unwrap();
        f.observe_ap_success(t(0.0), true);
        f.observe_ap_success(t(0.001), true);
        f.observe_ap_success(t(0.003), false);
        f.observe_ap_success(t(1.0), true);
        f.observe_ap_success(t(1.004), true);
        assert!((f.measured_ct_ap().unwrap() - 0.007 / 3.0).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn rewriting_never_raises_window(
            flows in proptest::collection::vec((0u32..12, proptest::bool::ANY, 0.0f64..0.1, 1.0f64..3.0), 1..12),
            adv in 1u32..200,
            at in 0.0f64..2.0,
        ) {
            let mut f = fcwa();
            for (id, up, ld, b) in &flows {
                let p = f.profile_mut(FlowId(*id), if *up { Direction::Up } else { Direction::Down }, t(0.0));
                p.ld_estimate = Some(*ld);
                p.b_estimate = Some(*b);
            }
            for (id, up, _, _) in &flows {
                let mut a = frame(*id, if *up { Direction::Up } else { Direction::Down }, FrameKind::TcpAck);
                a.advertised_window = adv;
                let out = f.rewrite_window(a, t(at));
                proptest::prop_assert!(out.advertised_window <= adv);
                proptest::prop_assert!(out.advertised_window >= 1);
            }
        }
    }
}
