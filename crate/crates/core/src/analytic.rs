// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// http://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or http://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.
//! Closed-form fair-window model.
//!
//! Everything here is a pure function of its inputs: AIMD stepping, the RTT
//! decomposition, the two-station DCF cycle time, the AP cycle time weighted
//! by packet-type probabilities, the per-flow congestion window limit and its
//! inverse, the AP buffer size.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use crate::error::{invalid, Result};

/// 802.11 MAC/PHY constants. Durations in seconds, rates in bits/second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacTiming {
    pub slot_time: f64,
    pub sifs: f64,
    pub difs: f64,
    pub data_rate: f64,
    pub basic_rate: f64,
    pub cw_min: u32,
    pub cw_max: u32,
    pub retry_limit: u32,
    pub mac_ack_duration: f64,
    pub phy_header_duration: f64,
    /// MAC header, LLC/SNAP and FCS bytes added to every IP packet on air.
    pub mac_overhead_bytes: u32,
}

impl MacTiming {
    /// 802.11g OFDM at 54 Mbps data / 6 Mbps basic rate.
    pub fn ieee80211g() -> Self {
        let phy_header_duration = 20e-6;
        let basic_rate = 6e6;
        MacTiming {
            slot_time: 9e-6,
            sifs: 10e-6,
            difs: 28e-6,
            data_rate: 54e6,
            basic_rate,
            cw_min: 15,
            cw_max: 1023,
            retry_limit: 7,
            // 14-byte control frame at the basic rate.
            mac_ack_duration: phy_header_duration + 112.0 / basic_rate,
            phy_header_duration,
            mac_overhead_bytes: 36,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let durations = [
            ("slot_time", self.slot_time),
            ("sifs", self.sifs),
            ("difs", self.difs),
            ("mac_ack_duration", self.mac_ack_duration),
            ("phy_header_duration", self.phy_header_duration),
        ];
        for (name, v) in durations {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.data_rate > 0.0 && self.basic_rate > 0.0) {
            return Err(invalid("rates must be > 0"));
        }
        if self.cw_min == 0 || self.cw_min > self.cw_max {
            return Err(invalid(format!(
                "need 0 < cw_min <= cw_max, got {} / {}",
                self.cw_min, self.cw_max
            )));
        }
        Ok(())
    }

    /// Time the frame itself occupies the medium.
    pub fn frame_tx_duration(&self, size: u32) -> f64 {
        self.phy_header_duration + 8.0 * f64::from(size + self.mac_overhead_bytes) / self.data_rate
    }

    /// Frame, SIFS and MAC ACK: the busy period of one exchange.
    pub fn exchange_duration(&self, size: u32) -> f64 {
        self.frame_tx_duration(size) + self.sifs + self.mac_ack_duration
    }

    /// Full cost of a successful transmission including the DIFS that
    /// follows it. A failed exchange costs the same: the sender waits out
    /// the ACK timeout before everyone defers DIFS again.
    pub fn frame_airtime(&self, size: u32) -> f64 {
        self.exchange_duration(size) + self.difs
    }

    /// Contention window after `stage` consecutive failures.
    pub fn cw_at_stage(&self, stage: u32) -> u32 {
        let mut cw = self.cw_min;
        for _ in 0..stage {
            cw = (2 * (cw + 1) - 1).min(self.cw_max);
        }
        cw
    }
}

impl Default for MacTiming {
    fn default() -> Self {
        Self::ieee80211g()
    }
}

/// Numbers of uplink and downlink TCP flows and their packet sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficMix {
    pub n_up: u32,
    pub n_down: u32,
    /// Data packets acknowledged per TCP ACK. May be fractional when it is
    /// an effective ratio estimated from traffic.
    pub b: f64,
    pub data_size: u32,
    pub ack_size: u32,
}

impl TrafficMix {
    pub fn new(n_up: u32, n_down: u32, b: f64) -> Self {
        TrafficMix { n_up, n_down, b, data_size: 1500, ack_size: 40 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_up + self.n_down == 0 {
            return Err(invalid("traffic mix needs at least one flow"));
        }
        if !(self.b >= 1.0 && self.b.is_finite()) {
            return Err(invalid(format!("delayed-ACK factor must be >= 1, got {}", self.b)));
        }
        if !(self.data_size > self.ack_size && self.ack_size > 0) {
            return Err(invalid("need data_size > ack_size > 0"));
        }
        Ok(())
    }

    /// `n_up/b + n_down`: AP transmissions per flow-level round.
    pub fn effective_flows(&self) -> f64 {
        f64::from(self.n_up) / self.b + f64::from(self.n_down)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AimdEvent {
    AdditiveIncrease,
    MultiplicativeDecrease,
}

pub fn aimd_step(w: f64, event: AimdEvent, alpha: f64, beta: f64) -> Result<f64> {
    if !(w > 0.0) {
        return Err(invalid(format!("window must be > 0, got {w}")));
    }
    if !(alpha > 0.0) {
        return Err(invalid(format!("alpha must be > 0, got {alpha}")));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid(format!("beta must be in (0, 1), got {beta}")));
    }
    Ok(match event {
        AimdEvent::AdditiveIncrease => w + alpha,
        AimdEvent::MultiplicativeDecrease => beta * w,
    })
}

/// Round-trip time as twice the wired delay plus queueing and access delays
/// at the AP and the station.
pub fn rtt(ld: f64, qd_ap: f64, qd_sta: f64, ad_ap: f64, ad_sta: f64) -> Result<f64> {
    for (name, v) in [("ld", ld), ("qd_ap", qd_ap), ("qd_sta", qd_sta), ("ad_ap", ad_ap), ("ad_sta", ad_sta)] {
        if !(v >= 0.0) {
            return Err(invalid(format!("{name} must be >= 0, got {v}")));
        }
    }
    Ok(2.0 * ld + qd_ap + qd_sta + ad_ap + ad_sta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketTypeProbs {
    pub ap_data: f64,
    pub ap_ack: f64,
    pub sta_data: f64,
    pub sta_ack: f64,
}

pub fn packet_type_probs(mix: &TrafficMix) -> Result<PacketTypeProbs> {
    if mix.n_up + mix.n_down == 0 {
        return Err(invalid("packet-type probabilities undefined without flows"));
    }
    if !(mix.b >= 1.0) {
        return Err(invalid(format!("delayed-ACK factor must be >= 1, got {}", mix.b)));
    }
    let up = f64::from(mix.n_up);
    let down = f64::from(mix.n_down);
    let ap_den = up / mix.b + down;
    let sta_den = down / mix.b + up;
    Ok(PacketTypeProbs {
        ap_data: down / ap_den,
        ap_ack: (up / mix.b) / ap_den,
        sta_data: up / sta_den,
        sta_ack: (down / mix.b) / sta_den,
    })
}

/// Long-run statistics of two saturated stations contending under DCF.
///
/// The chain is embedded at the start of each contention period. Its state
/// is either "one station has just succeeded and draws afresh from stage 0
/// while the other keeps a frozen residual counter `r` at stage `s`", or
/// "both stations just collided and draw afresh from stages `(x, y)`".
/// Frame sizes do not influence backoff, so one solution serves every pair
/// of packet sizes. Statistics are per contention period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoStationChain {
    /// Mean idle backoff slots preceding a transmission.
    pub idle_slots: f64,
    /// Probability the period ends in a success (either station).
    pub success: f64,
    /// Probability the period ends in a collision.
    pub collision: f64,
}

type ChainCache = HashMap<(u32, u32, u32), TwoStationChain>;

impl TwoStationChain {
    /// Solutions depend only on the backoff parameters and are memoized.
    pub fn solve(timing: &MacTiming) -> Self {
        static CACHE: OnceLock<Mutex<ChainCache>> = OnceLock::new();
        let key = (timing.cw_min, timing.cw_max, timing.retry_limit);
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(hit) = cache.lock().expect("chain cache").get(&key) {
            return *hit;
        }
        let chain = Self::solve_uncached(timing);
        cache.lock().expect("chain cache").insert(key, chain);
        chain
    }

    fn solve_uncached(timing: &MacTiming) -> Self {
        let max_stage = timing.retry_limit as usize;
        let cws: Vec<usize> = (0..=max_stage).map(|s| timing.cw_at_stage(s as u32) as usize).collect();
        // State indexing: residual states first, then collision states.
        let mut offsets = Vec::with_capacity(cws.len());
        let mut n_states = 0;
        for &cw in &cws {
            offsets.push(n_states);
            n_states += cw;
        }
        let residual = |s: usize, r: usize| offsets[s] + r - 1;
        let coll_base = n_states;
        n_states += cws.len() * cws.len();
        let collided = |x: usize, y: usize| coll_base + x * cws.len() + y;
        let next_stage = |s: usize| if s + 1 > max_stage { 0 } else { s + 1 };

        // (to, probability, idle slots, ended in success)
        let mut trans: Vec<Vec<(usize, f64, f64, bool)>> = vec![Vec::new(); n_states];
        let w0 = cws[0];
        let p0 = 1.0 / (w0 + 1) as f64;
        for (s, &cw) in cws.iter().enumerate() {
            for r in 1..=cw {
                let out = &mut trans[residual(s, r)];
                for d in 0..=w0 {
                    if d < r {
                        out.push((residual(s, r - d), p0, d as f64, true));
                    } else if d > r {
                        out.push((residual(0, d - r), p0, r as f64, true));
                    } else {
                        out.push((collided(next_stage(0), next_stage(s)), p0, r as f64, false));
                    }
                }
            }
        }
        for x in 0..cws.len() {
            for y in 0..cws.len() {
                let (wx, wy) = (cws[x], cws[y]);
                let norm = 1.0 / ((wx + 1) * (wy + 1)) as f64;
                let out = &mut trans[collided(x, y)];
                // First station draws lower by k: the other keeps residual k.
                for (lo_cw, hi_cw, hi_stage) in [(wx, wy, y), (wy, wx, x)] {
                    for k in 1..=hi_cw {
                        let top = hi_cw - k;
                        let count = top.min(lo_cw) + 1;
                        let mean_idle = top.min(lo_cw) as f64 / 2.0;
                        out.push((residual(hi_stage, k), count as f64 * norm, mean_idle, true));
                    }
                }
                let ties = wx.min(wy) + 1;
                out.push((
                    collided(next_stage(x), next_stage(y)),
                    ties as f64 * norm,
                    wx.min(wy) as f64 / 2.0,
                    false,
                ));
            }
        }

        // Stationary distribution by power iteration from the cold start,
        // where both stations draw from stage 0.
        let mut pi = vec![0.0; n_states];
        pi[collided(0, 0)] = 1.0;
        let mut next = vec![0.0; n_states];
        for _ in 0..10_000 {
            next.iter_mut().for_each(|v| *v = 0.0);
            for (from, outs) in trans.iter().enumerate() {
                let mass = pi[from];
                if mass == 0.0 {
                    continue;
                }
                for &(to, p, _, _) in outs {
                    next[to] += mass * p;
                }
            }
            let delta: f64 = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
            std::mem::swap(&mut pi, &mut next);
            if delta < 1e-14 {
                break;
            }
        }

        let mut idle_slots = 0.0;
        let mut success = 0.0;
        let mut collision = 0.0;
        for (from, outs) in trans.iter().enumerate() {
            for &(_, p, idle, ok) in outs {
                let w = pi[from] * p;
                idle_slots += w * idle;
                if ok {
                    success += w;
                } else {
                    collision += w;
                }
            }
        }
        TwoStationChain { idle_slots, success, collision }
    }

    /// Fraction of transmission attempts that collide. A collision counts
    /// as one attempt from each station.
    pub fn collision_probability(&self) -> f64 {
        2.0 * self.collision / (2.0 * self.collision + self.success)
    }

    /// Mean interval between successes of one station, the tagged one
    /// sending `tagged_airtime` frames and the other `other_airtime`.
    pub fn cycle_time(&self, slot_time: f64, tagged_airtime: f64, other_airtime: f64) -> f64 {
        // Each station wins half of the successes.
        let per_period = self.idle_slots * slot_time
            + 0.5 * self.success * (tagged_airtime + other_airtime)
            + self.collision * tagged_airtime.max(other_airtime);
        per_period / (0.5 * self.success)
    }
}

/// Mean interval between successes of one station when exactly two
/// saturated stations contend, one sending `p1_size`-byte packets and the
/// other `p2_size`-byte packets.
pub fn cycle_time_pair(p1_size: u32, p2_size: u32, timing: &MacTiming) -> Result<f64> {
    if p1_size == 0 || p2_size == 0 {
        return Err(invalid("packet sizes must be > 0"));
    }
    timing.validate()?;
    let chain = TwoStationChain::solve(timing);
    Ok(chain.cycle_time(timing.slot_time, timing.frame_airtime(p1_size), timing.frame_airtime(p2_size)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketType {
    Data,
    Ack,
}

/// `ct[p1][p2]` with index 0 = DATA, 1 = ACK; `p1` is the AP's packet type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleTimeTable {
    pub ct: [[f64; 2]; 2],
}

impl CycleTimeTable {
    pub fn compute(data_size: u32, ack_size: u32, timing: &MacTiming) -> Result<Self> {
        timing.validate()?;
        if data_size == 0 || ack_size == 0 {
            return Err(invalid("packet sizes must be > 0"));
        }
        Ok(Self::from_chain(&TwoStationChain::solve(timing), data_size, ack_size, timing))
    }

    pub fn from_chain(chain: &TwoStationChain, data_size: u32, ack_size: u32, timing: &MacTiming) -> Self {
        let airtimes = [timing.frame_airtime(data_size), timing.frame_airtime(ack_size)];
        let mut ct = [[0.0; 2]; 2];
        for (i, &a) in airtimes.iter().enumerate() {
            for (j, &b) in airtimes.iter().enumerate() {
                ct[i][j] = chain.cycle_time(timing.slot_time, a, b);
            }
        }
        CycleTimeTable { ct }
    }

    pub fn get(&self, ap: PacketType, sta: PacketType) -> f64 {
        self.ct[ap as usize][sta as usize]
    }
}

pub fn ct_ap(mix: &TrafficMix, timing: &MacTiming) -> Result<f64> {
    mix.validate()?;
    let table = CycleTimeTable::compute(mix.data_size, mix.ack_size, timing)?;
    ct_ap_from_table(mix, &table)
}

pub fn ct_ap_from_table(mix: &TrafficMix, table: &CycleTimeTable) -> Result<f64> {
    let pr = packet_type_probs(mix)?;
    let ap = [(PacketType::Data, pr.ap_data), (PacketType::Ack, pr.ap_ack)];
    let sta = [(PacketType::Data, pr.sta_data), (PacketType::Ack, pr.sta_ack)];
    let mut total = 0.0;
    for (p1, w1) in ap {
        for (p2, w2) in sta {
            total += w1 * w2 * table.get(p1, p2);
        }
    }
    Ok(total)
}

pub fn ct_flow(mix: &TrafficMix, ct_ap: f64) -> Result<f64> {
    if !(ct_ap > 0.0) {
        return Err(invalid(format!("ct_ap must be > 0, got {ct_ap}")));
    }
    Ok(mix.effective_flows() * ct_ap)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowLimitResult {
    pub ct_ap: f64,
    pub ct_flow: f64,
    pub w_lim: f64,
    /// Packets of the flow in flight on the wired segment.
    pub wired_flight_term: f64,
    /// Packets of the flow sitting in the AP buffer.
    pub buffer_term: f64,
}

impl WindowLimitResult {
    pub fn floor(&self) -> u32 {
        self.w_lim.floor() as u32
    }
}

pub fn w_lim(ld: f64, mix: &TrafficMix, bs_ap: f64, timing: &MacTiming) -> Result<WindowLimitResult> {
    let ct = ct_ap(mix, timing)?;
    w_lim_with_ct_ap(ld, mix, bs_ap, ct)
}

/// Window limit for a known AP cycle time (model-based or measured).
pub fn w_lim_with_ct_ap(ld: f64, mix: &TrafficMix, bs_ap: f64, ct_ap: f64) -> Result<WindowLimitResult> {
    if !(ld >= 0.0) {
        return Err(invalid(format!("ld must be >= 0, got {ld}")));
    }
    if !(bs_ap >= 1.0) {
        return Err(invalid(format!("AP buffer must hold at least one packet, got {bs_ap}")));
    }
    mix.validate()?;
    let ct_flow = ct_flow(mix, ct_ap)?;
    let wired_flight_term = 2.0 * ld / ct_flow;
    let buffer_term = bs_ap / mix.effective_flows();
    Ok(WindowLimitResult {
        ct_ap,
        ct_flow,
        w_lim: wired_flight_term + buffer_term,
        wired_flight_term,
        buffer_term,
    })
}

pub fn buffer_size(w_lim: f64, ld: f64, mix: &TrafficMix, timing: &MacTiming) -> Result<f64> {
    let ct = ct_ap(mix, timing)?;
    buffer_size_with_ct_ap(w_lim, ld, mix, ct)
}

pub fn buffer_size_with_ct_ap(w_lim: f64, ld: f64, mix: &TrafficMix, ct_ap: f64) -> Result<f64> {
    if !(ld >= 0.0) {
        return Err(invalid(format!("ld must be >= 0, got {ld}")));
    }
    mix.validate()?;
    let ct_flow = ct_flow(mix, ct_ap)?;
    let wired = 2.0 * ld / ct_flow;
    if !(w_lim > wired) {
        return Err(invalid(format!(
            "window {w_lim} does not exceed the {wired:.3} packets in flight on the wire"
        )));
    }
    Ok((w_lim - wired) * mix.effective_flows())
}
