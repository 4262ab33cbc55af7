// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// http://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or http://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.
//! ACK congestion control and filtering at the AP.
//!
//! TCP ACKs of uplink flows are held in a one-slot-per-flow buffer and
//! released to the AP's MAC queue no faster than downlink data arrives.
//! A newer ACK replaces the buffered one; cumulative acknowledgement makes
//! the dropped ACK redundant.

use crate::error::{invalid, Result};
use crate::frame::{Direction, FlowId, Frame};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaShape {
    /// `gamma_min` below the threshold, 1 at or above it.
    Step,
    /// Linear from `gamma_min` at one accumulated ACK to 1 at the threshold.
    LinearRamp,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccfParams {
    /// Cutoff multiplier for which downlink flows count towards the pacing rate.
    pub alpha: f64,
    /// Multiplier on a flow's own ACK interarrival for the burst delay.
    pub beta: f64,
    pub gamma_min: f64,
    pub num_thresh: u32,
    pub gamma_shape: GammaShape,
    pub ewma_weight: f64,
    /// Silence after which a flow's rate estimate is forgotten, seconds.
    pub estimator_expiry: f64,
}

impl Default for AccfParams {
    fn default() -> Self {
        AccfParams {
            alpha: 1.5,
            beta: 2.0,
            gamma_min: 0.5,
            num_thresh: 10,
            gamma_shape: GammaShape::Step,
            ewma_weight: 0.1,
            estimator_expiry: 30.0,
        }
    }
}

impl AccfParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 1.0) {
            return Err(invalid(format!("alpha must be > 1, got {}", self.alpha)));
        }
        if !(self.beta > 1.0) {
            return Err(invalid(format!("beta must be > 1, got {}", self.beta)));
        }
        if !(self.gamma_min > 0.0 && self.gamma_min <= 1.0) {
            return Err(invalid(format!("gamma_min must be in (0, 1], got {}", self.gamma_min)));
        }
        if self.num_thresh < 1 {
            return Err(invalid("num_thresh must be >= 1"));
        }
        if !(self.ewma_weight > 0.0 && self.ewma_weight <= 1.0) {
            return Err(invalid(format!("EWMA weight must be in (0, 1], got {}", self.ewma_weight)));
        }
        if !(self.estimator_expiry > 0.0) {
            return Err(invalid("estimator expiry must be > 0"));
        }
        Ok(())
    }
}

/// Weight applied to the pacing delay of an ACK that covers `num_cum` packets.
pub fn gamma(num_cum: u64, params: &AccfParams) -> f64 {
    if num_cum >= u64::from(params.num_thresh) {
        return 1.0;
    }
    match params.gamma_shape {
        GammaShape::Step => params.gamma_min,
        GammaShape::LinearRamp => {
            let span = f64::from(params.num_thresh - 1);
            let pos = (num_cum.max(1) - 1) as f64 / span;
            params.gamma_min + (1.0 - params.gamma_min) * pos
        }
    }
}

/// Mean of the interarrivals below `alpha` times the smallest one.
pub fn cutoff_mean(intervals: &[f64], alpha: f64) -> Option<f64> {
    let min = intervals.iter().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return None;
    }
    let cutoff = alpha * min;
    let (sum, n) = intervals
        .iter()
        .filter(|&&x| x < cutoff)
        .fold((0.0, 0u32), |(s, n), &x| (s + x, n + 1));
    Some(sum / f64::from(n))
}

#[derive(Debug, Clone, Copy)]
struct FlowRate {
    direction: Direction,
    last_arrival: SimTime,
    avg_int: Option<f64>,
}

/// Per-flow EWMA of packet interarrival times seen at the AP.
#[derive(Debug, Clone)]
pub struct RateEstimator {
    weight: f64,
    expiry: f64,
    alpha: f64,
    flows: Vec<Option<FlowRate>>,
}

impl RateEstimator {
    pub fn new(params: &AccfParams) -> Self {
        RateEstimator {
            weight: params.ewma_weight,
            expiry: params.estimator_expiry,
            alpha: params.alpha,
            flows: Vec::new(),
        }
    }

    pub fn record(&mut self, flow: FlowId, direction: Direction, now: SimTime) {
        let idx = flow.0 as usize;
        if self.flows.len() <= idx {
            self.flows.resize(idx + 1, None);
        }
        let slot = &mut self.flows[idx];
        match slot {
            Some(r) if now.secs_since(r.last_arrival) <= self.expiry => {
                let gap = now.secs_since(r.last_arrival);
                r.avg_int = Some(match r.avg_int {
                    None => gap,
                    Some(avg) => (1.0 - self.weight) * avg + self.weight * gap,
                });
                r.last_arrival = now;
            }
            _ => *slot = Some(FlowRate { direction, last_arrival: now, avg_int: None }),
        }
    }

    fn live(&self, flow: usize, now: SimTime) -> Option<&FlowRate> {
        self.flows
            .get(flow)?
            .as_ref()
            .filter(|r| now.secs_since(r.last_arrival) <= self.expiry)
    }

    pub fn avg_int(&self, flow: FlowId, now: SimTime) -> Option<f64> {
        self.live(flow.0 as usize, now)?.avg_int
    }

    /// Pacing reference: cutoff mean over live downlink flows.
    pub fn avg_data_int(&self, now: SimTime) -> Option<f64> {
        let ints: Vec<f64> = (0..self.flows.len())
            .filter_map(|i| self.live(i, now))
            .filter(|r| r.direction == Direction::Down)
            .filter_map(|r| r.avg_int)
            .collect();
        cutoff_mean(&ints, self.alpha)
    }
}

#[derive(Debug, Clone)]
pub enum AccfAction {
    ReleaseNow(Frame),
    BufferUntil(SimTime),
    Bypass(Frame),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Bypass,
    /// No downlink rate to pace against.
    NoDownlink,
    Buffer,
    BurstBuffer,
    Release,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Bypass => "bypass",
            Branch::NoDownlink => "no_downlink",
            Branch::Buffer => "buffer",
            Branch::BurstBuffer => "burst_buffer",
            Branch::Release => "release",
        }
    }
}

/// Delay for an ACK covering \`num_cum\` packets, \`t_buf\` seconds after the
/// flow's previous release. Returns the delay (D, or the burst delay) and
/// the branch; the delay is negative only on \`Branch::Release\`.
pub fn buffering_delay(
    params: &AccfParams,
    num_cum: u64,
    t_buf: f64,
    avg_data_int: Option<f64>,
    avg_int: Option<f64>,
) -> (Option<f64>, Branch) {
    let Some(adi) = avg_data_int else {
        return (None, Branch::NoDownlink);
    };
    let d = gamma(num_cum, params) * num_cum as f64 * adi - t_buf;
    if d >= 0.0 {
        return (Some(d), Branch::Buffer);
    }
    match avg_int {
        Some(ai) if d + params.beta * ai < 0.0 => (Some(params.beta * ai), Branch::BurstBuffer),
        _ => (Some(d), Branch::Release),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccfDecision {
    pub time: SimTime,
    pub flow: FlowId,
    pub num_cum: u64,
    pub t_buf: f64,
    pub delay: Option<f64>,
    pub branch: Branch,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AccfStats {
    pub arrivals: u64,
    pub bypassed: u64,
    pub released_now: u64,
    pub buffered: u64,
    /// Buffered ACKs overwritten by a newer one.
    pub replaced: u64,
    /// Buffered ACKs superseded by a flagged ACK that went straight through.
    pub superseded: u64,
    pub timer_releases: u64,
    pub spurious_expiries: u64,
}

#[derive(Debug, Clone, Default)]
struct AckSlot {
    buffered: Option<Frame>,
    num_cum: u64,
    last_released_ack: u64,
    last_release: Option<SimTime>,
    deadline: Option<SimTime>,
}

#[derive(Debug, Clone)]
pub struct Accf {
    params: AccfParams,
    rates: RateEstimator,
    slots: Vec<AckSlot>,
    pub stats: AccfStats,
    log: Option<Vec<AccfDecision>>,
}

impl Accf {
    pub fn new(params: AccfParams) -> Result<Self> {
        params.validate()?;
        Ok(Accf { rates: RateEstimator::new(&params), params, slots: Vec::new(), stats: AccfStats::default(), log: None })
    }

    pub fn with_decision_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn params(&self) -> &AccfParams {
        &self.params
    }

    pub fn rates(&self) -> &RateEstimator {
        &self.rates
    }

    pub fn decisions(&self) -> &[AccfDecision] {
        self.log.as_deref().unwrap_or(&[])
    }

    pub fn take_decisions(&mut self) -> Vec<AccfDecision> {
        self.log.as_mut().map(std::mem::take).unwrap_or_default()
    }

    fn slot(&mut self, flow: FlowId) -> &mut AckSlot {
        let idx = flow.0 as usize;
        if self.slots.len() <= idx {
            self.slots.resize_with(idx + 1, AckSlot::default);
        }
        &mut self.slots[idx]
    }

    pub fn buffered(&self, flow: FlowId) -> Option<&Frame> {
        self.slots.get(flow.0 as usize)?.buffered.as_ref()
    }

    pub fn timer_deadline(&self, flow: FlowId) -> Option<SimTime> {
        self.slots.get(flow.0 as usize)?.deadline
    }

    pub fn buffered_count(&self) -> usize {
        self.slots.iter().filter(|s| s.buffered.is_some()).count()
    }

    /// Feed every TCP packet arriving at the AP from the wired side:
    /// downlink data and uplink-flow ACKs.
    pub fn update_rates(&mut self, packet: &Frame, now: SimTime) {
        let counts = match packet.direction {
            Direction::Down => packet.is_data(),
            Direction::Up => packet.is_ack(),
        };
        if counts {
            self.rates.record(packet.flow, packet.direction, now);
        }
    }

    fn log(&mut self, d: AccfDecision) {
        if let Some(log) = self.log.as_mut() {
            log.push(d);
        }
    }

    /// Decide what happens to an ACK of an uplink flow arriving at the AP.
    pub fn on_ack_arrival(&mut self, ack: Frame, now: SimTime) -> AccfAction {
        self.stats.arrivals += 1;
        let flow = ack.flow;
        if ack.flags.any() {
            let slot = self.slot(flow);
            let mut superseded = false;
            if slot.buffered.as_ref().is_some_and(|b| b.ack_no <= ack.ack_no) {
                slot.buffered = None;
                slot.deadline = None;
                slot.num_cum = 0;
                superseded = true;
            }
            slot.last_released_ack = slot.last_released_ack.max(ack.ack_no);
            self.stats.bypassed += 1;
            self.stats.superseded += u64::from(superseded);
            self.log(AccfDecision { time: now, flow, num_cum: 0, t_buf: 0.0, delay: None, branch: Branch::Bypass });
            return AccfAction::Bypass(ack);
        }

        let slot = self.slot(flow);
        if slot.buffered.take().is_some() {
            slot.deadline = None;
            self.stats.replaced += 1;
        }
        let slot = self.slot(flow);
        let num_cum = ack.ack_no.saturating_sub(slot.last_released_ack).max(1);
        let last_release = *slot.last_release.get_or_insert(now);
        let t_buf = now.secs_since(last_release);

        let avg_data_int = self.rates.avg_data_int(now);
        let avg_int = self.rates.avg_int(flow, now);
        let (delay, branch) = buffering_delay(&self.params, num_cum, t_buf, avg_data_int, avg_int);
        self.log(AccfDecision { time: now, flow, num_cum, t_buf, delay, branch });

        let slot = self.slot(flow);
        match branch {
            Branch::Buffer | Branch::BurstBuffer => {
                let wait = delay.expect("buffering branch has a delay");
                let deadline = now + SimTime::from_secs_f64(wait);
                slot.buffered = Some(ack);
                slot.num_cum = num_cum;
                slot.deadline = Some(deadline);
                self.stats.buffered += 1;
                AccfAction::BufferUntil(deadline)
            }
            _ => {
                slot.last_released_ack = ack.ack_no;
                slot.last_release = Some(now);
                slot.num_cum = 0;
                self.stats.released_now += 1;
                AccfAction::ReleaseNow(ack)
            }
        }
    }

    /// Release the buffered ACK whose timer fires at `now`.
    pub fn on_timer_expire(&mut self, flow: FlowId, now: SimTime) -> Option<Frame> {
        let slot = self.slot(flow);
        let Some(ack) = slot.buffered.take() else {
            slot.deadline = None;
            self.stats.spurious_expiries += 1;
            return None;
        };
        slot.deadline = None;
        slot.num_cum = 0;
        slot.last_released_ack = ack.ack_no;
        slot.last_release = Some(now);
        self.stats.timer_releases += 1;
        Some(ack)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{FrameKind, TcpFlags};

    fn t(s: f64) -> SimTime {
        SimTime::from_secs_f64(s)
    }

    fn ack(flow: u32, no: u64) -> Frame {
        Frame {
            flow: FlowId(flow),
            direction: Direction::Up,
            kind: FrameKind::TcpAck,
            size: 40,
            seq: 0,
            ack_no: no,
            advertised_window: 42,
            flags: TcpFlags::NONE,
            ts_val: SimTime::ZERO,
            ts_ecr: None,
            enqueue_time: SimTime::ZERO,
        }
    }

    fn down_data(flow: u32) -> Frame {
        Frame { direction: Direction::Down, kind: FrameKind::TcpData, size: 1500, ..ack(flow, 0) }
    }

    /// Downlink flow 0 arriving every `gap` seconds until `until`.
    fn pace_downlink(a: &mut Accf, gap: f64, until: f64) {
        let mut now = 0.0;
        while now <= until + 1e-12 {
            a.update_rates(&down_data(0), t(now));
            now += gap;
        }
    }

    #[test]
    fn gamma_step() {
        let p = AccfParams::default();
        assert_eq!(gamma(15, &p), 1.0);
        assert_eq!(gamma(10, &p), 1.0);
        assert_eq!(gamma(3, &p), 0.5);
        let p1 = AccfParams { num_thresh: 1, ..p };
        assert_eq!(gamma(1, &p1), 1.0);
        let ramp = AccfParams { gamma_shape: GammaShape::LinearRamp, ..p };
        assert_eq!(gamma(1, &ramp), 0.5);
        assert!((gamma(5, &ramp) - (0.5 + 0.5 * 4.0 / 9.0)).abs() < 1e-12);
        assert_eq!(gamma(12, &ramp), 1.0);
    }

    #[test]
    fn cutoff_mean_examples() {
        assert!((cutoff_mean(&[0.010, 0.011, 0.040], 1.5).unwrap() - 0.0105).abs() < 1e-15);
        assert_eq!(cutoff_mean(&[0.02], 1.5), Some(0.02));
        assert_eq!(cutoff_mean(&[0.03; 4], 1.5), Some(0.03));
        assert_eq!(cutoff_mean(&[], 1.5), None);
    }

    #[test]
    fn estimator_ewma_and_expiry() {
        let p = AccfParams::default();
        let mut r = RateEstimator::new(&p);
        r.record(FlowId(0), Direction::Down, t(0.0));
        assert_eq!(r.avg_int(FlowId(0), t(0.0)), None);
        r.record(FlowId(0), Direction::Down, t(0.010));
        assert!((r.avg_int(FlowId(0), t(0.01)).unwrap() - 0.010).abs() < 1e-12);
        r.record(FlowId(0), Direction::Down, t(0.030));
        assert!((r.avg_int(FlowId(0), t(0.03)).unwrap() - 0.011).abs() < 1e-12);
        assert_eq!(r.avg_int(FlowId(0), t(31.0)), None);
        assert_eq!(r.avg_data_int(t(31.0)), None);
    }

    #[test]
    fn buffer_branch_substitution() {
        // Pacing reference 20 ms; first ACK at t=0 starts the clock, the
        // second covers five packets 10 ms later: D = 0.5*5*0.020 - 0.010.
        let mut a = Accf::new(AccfParams::default()).unwrap();
        pace_downlink(&mut a, 0.020, 1.0);
        let now = 1.0;
        assert!(matches!(a.on_ack_arrival(ack(1, 0), t(now)), AccfAction::BufferUntil(_)));
        a.on_timer_expire(FlowId(1), t(now)).unwrap();
        match a.on_ack_arrival(ack(1, 5), t(now + 0.010)) {
            AccfAction::BufferUntil(d) => assert_eq!(d, t(now + 0.010 + 0.040)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn burst_branch_substitution() {
        let p = AccfParams::default();
        let (d, branch) = buffering_delay(&p, 12, 0.500, Some(0.010), Some(0.005));
        assert_eq!(branch, Branch::BurstBuffer);
        assert!((d.unwrap() - 0.010).abs() < 1e-15);
        let (d, branch) = buffering_delay(&p, 5, 0.010, Some(0.020), None);
        assert_eq!(branch, Branch::Buffer);
        assert!((d.unwrap() - 0.040).abs() < 1e-15);
        assert_eq!(buffering_delay(&p, 5, 0.0, None, None), (None, Branch::NoDownlink));
        // Due, but no estimate of the flow's own ACK rate yet.
        assert_eq!(buffering_delay(&p, 1, 1.0, Some(0.01), None).1, Branch::Release);
    }

    #[test]
    fn late_ack_released_now() {
        let mut a = Accf::new(AccfParams::default()).unwrap().with_decision_log();
        pace_downlink(&mut a, 0.010, 2.0);
        for i in 0..20 {
            a.update_rates(&ack(1, 0), t(1.0 + 0.1 * f64::from(i)));
        }
        a.on_ack_arrival(ack(1, 0), t(1.0));
        a.on_timer_expire(FlowId(1), t(1.0));
        // D = 0.5*2*0.010 - 0.1 = -0.09; D + 2*0.1 > 0.
        assert!(matches!(a.on_ack_arrival(ack(1, 2), t(1.1)), AccfAction::ReleaseNow(_)));
        assert_eq!(a.decisions().last().unwrap().branch, Branch::Release);
    }

    #[test]
    fn flagged_ack_bypasses() {
        let mut a = Accf::new(AccfParams::default()).unwrap();
        pace_downlink(&mut a, 0.010, 1.0);
        let mut dup = ack(1, 3);
        dup.flags.dup_ack = true;
        assert!(matches!(a.on_ack_arrival(dup, t(1.0)), AccfAction::Bypass(_)));
        assert_eq!(a.stats.bypassed, 1);
    }

    #[test]
    fn no_downlink_releases() {
        let mut a = Accf::new(AccfParams::default()).unwrap();
        assert!(matches!(a.on_ack_arrival(ack(1, 1), t(1.0)), AccfAction::ReleaseNow(_)));
    }

    #[test]
    fn newer_ack_replaces_buffered() {
        let mut a = Accf::new(AccfParams::default()).unwrap();
        pace_downlink(&mut a, 0.020, 1.0);
        a.on_ack_arrival(ack(1, 2), t(1.0));
        a.on_ack_arrival(ack(1, 4), t(1.001));
        assert_eq!(a.buffered(FlowId(1)).unwrap().ack_no, 4);
        assert_eq!(a.stats.replaced, 1);
        let deadline = a.timer_deadline(FlowId(1)).unwrap();
        let released = a.on_timer_expire(FlowId(1), deadline).unwrap();
        assert_eq!(released.ack_no, 4);
        assert!(a.buffered(FlowId(1)).is_none());
        assert!(a.on_timer_expire(FlowId(1), deadline).is_none());
        assert_eq!(a.stats.spurious_expiries, 1);
    }

    #[test]
    fn release_resets_tbuf() {
        let mut a = Accf::new(AccfParams::default()).unwrap().with_decision_log();
        pace_downlink(&mut a, 0.020, 1.0);
        a.on_ack_arrival(ack(1, 1), t(0.5));
        a.on_timer_expire(FlowId(1), t(0.6)).unwrap();
        a.on_ack_arrival(ack(1, 2), t(0.6));
        let d = a.decisions().last().unwrap();
        assert_eq!(d.t_buf, 0.0);
        assert_eq!(d.num_cum, 1);
    }

    #[test]
    fn rejects_bad_params() {
        for p in [
            AccfParams { alpha: 1.0, ..Default::default() },
            AccfParams { beta: 0.5, ..Default::default() },
            AccfParams { gamma_min: 0.0, ..Default::default() },
            AccfParams { num_thresh: 0, ..Default::default() },
        ] {
            assert!(Accf::new(p).is_err());
        }
    }

    #[derive(Debug, Clone)]
    enum Ev {
        Downlink(f64),
        Ack { flow: u32, advance: u64, flagged: bool, gap: f64 },
    }

    fn ev() -> impl proptest::strategy::Strategy<Value = Ev> {
        use proptest::prelude::*;
        prop_oneof![
            (0.0f64..0.005).prop_map(Ev::Downlink),
            (0u32..5, 0u64..4, proptest::bool::weighted(0.1), 0.0f64..0.005)
                .prop_map(|(flow, advance, flagged, gap)| Ev::Ack { flow, advance, flagged, gap }),
        ]
    }

    proptest::proptest! {
        #[test]
        fn slot_flag_and_order_invariants(events in proptest::collection::vec(ev(), 1..400)) {
            let mut a = Accf::new(AccfParams::default()).unwrap();
            let mut now = 0.0;
            let mut next = [1u64; 5];
            let mut released = [0u64; 5];
            let mut check_release = |fr: &Frame| -> std::result::Result<(), proptest::test_runner::TestCaseError> {
                let i = fr.flow.0 as usize;
                proptest::prop_assert!(fr.ack_no >= released[i], "flow {} reordered", i);
                released[i] = fr.ack_no;
                Ok(())
            };
            for e in events {
                let gap = match e { Ev::Downlink(g) | Ev::Ack { gap: g, .. } => g };
                now += gap;
                loop {
                    let due = (0..5u32)
                        .filter_map(|f| a.timer_deadline(FlowId(f)).map(|d| (d, f)))
                        .filter(|(d, _)| *d <= t(now))
                        .min();
                    let Some((d, f)) = due else { break };
                    let fr = a.on_timer_expire(FlowId(f), d).expect("armed timer without an ACK");
                    check_release(&fr)?;
                }
                match e {
                    Ev::Downlink(_) => a.update_rates(&down_data(0), t(now)),
                    Ev::Ack { flow, advance, flagged, .. } => {
                        next[flow as usize] += advance;
                        let mut fr = ack(flow, next[flow as usize]);
                        fr.flags.dup_ack = flagged;
                        a.update_rates(&fr, t(now));
                        match a.on_ack_arrival(fr, t(now)) {
                            AccfAction::Bypass(out) => {
                                proptest::prop_assert!(flagged);
                                check_release(&out)?;
                            }
                            AccfAction::ReleaseNow(out) => {
                                proptest::prop_assert!(!flagged);
                                check_release(&out)?;
                            }
                            AccfAction::BufferUntil(d) => {
                                proptest::prop_assert!(!flagged);
                                proptest::prop_assert!(d >= t(now));
                            }
                        }
                    }
                }
                for f in 0..5u32 {
                    let held = a.buffered(FlowId(f));
                    proptest::prop_assert_eq!(held.is_some(), a.timer_deadline(FlowId(f)).is_some());
                    proptest::prop_assert!(held.is_none_or(|h| h.flow == FlowId(f)));
                }
                proptest::prop_assert!(a.buffered_count() <= 5);
            }
        }
    }
}
