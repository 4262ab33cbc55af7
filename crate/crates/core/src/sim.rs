// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// http://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or http://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.
//! One seeded run of a scenario.
//!
//! Node 0 is the AP and flow `i` has its own station, node `i + 1`. The
//! wired side of every flow is a fixed one-way delay with no bandwidth
//! limit. Downlink senders and uplink receivers live on the wired side.

use std::io::Write;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::accf::{Accf, AccfAction};
use crate::error::{Error, Result};
use crate::event::{EventQueue, Priority};
use crate::fcwa::{Fcwa, FcwaConfig, Hop};
use crate::frame::{Direction, FlowId, Frame};
use crate::mac::{Completion, Dcf, TxOutcome};
use crate::report::{FlowReport, RunReport};
use crate::scenario::{ControlBlock, FlowKind, FlowSpec, ScenarioSpec};
use crate::tcp::{TcpReceiver, TcpSender};
use crate::time::SimTime;

const AP: usize = 0;
const BIN_WIDTH: f64 = 1.0;

#[derive(Debug, Clone)]
enum Event {
    TxStart(u64),
    TxEnd,
    /// Packet from the wired side reaching the AP.
    AtAp(Frame),
    /// Packet from the AP reaching the wired host.
    AtHost(Frame),
    Rto(u32),
    DelayedAck(u32),
    AccfTimer(u32),
    FlowStart(u32),
    AppPacket(u32),
}

enum Control {
    None,
    Fcwa(Box<Fcwa>),
    Accf(Box<Accf>),
}

struct FlowState {
    spec: FlowSpec,
    sender: TcpSender,
    receiver: TcpReceiver,
    node: usize,
    rto_event: Option<SimTime>,
    delack_event: Option<SimTime>,
    report: FlowReport,
    /// ACKs that reached the sender, and ACKs the control block discarded.
    acks_delivered: u64,
    acks_filtered: u64,
    data_lost: u64,
    acks_lost: u64,
}

pub struct Simulator {
    spec: ScenarioSpec,
    seed: u64,
    flows: Vec<FlowState>,
    dcf: Dcf<Frame>,
    events: EventQueue<Event>,
    mac_rng: ChaCha8Rng,
    app_rng: ChaCha8Rng,
    control: Control,
    attached: bool,
    accf_log: bool,
    tx_epoch: u64,
    scheduled_tx: Option<SimTime>,
    end: SimTime,
    warmup: SimTime,
    nbins: usize,
    ap_enqueued_steady: u64,
    ap_drops_steady: u64,
    processed: u64,
    trace: Option<Box<dyn Write>>,
}

impl Simulator {
    /// Build a simulator for a validated scenario. The scenario's control
    /// block is attached here.
    pub fn new(spec: &ScenarioSpec, seed: u64) -> Result<Self> {
        let mut sim = Self::bare(spec, seed)?;
        if spec.control != ControlBlock::None {
            sim.attach_control_block(spec.control)?;
        }
        Ok(sim)
    }

    /// Like [`Simulator::new`] but ignores the scenario's control block,
    /// leaving attachment to the caller.
    pub fn bare(spec: &ScenarioSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let specs = spec.expand_flows();
        let mut capacities = vec![spec.bs_ap as usize];
        capacities.extend(std::iter::repeat_n(spec.sta_queue as usize, specs.len()));
        let dcf = Dcf::new(spec.timing, spec.per, &capacities, true)?;
        let nbins = (spec.duration / BIN_WIDTH).ceil() as usize;
        let mut events = EventQueue::new();
        let flows = specs
            .into_iter()
            .enumerate()
            .map(|(i, f)| {
                let mut sender = TcpSender::new(f.id, f.direction, f.window, spec.tcp);
                sender = match f.kind {
                    FlowKind::Ftp => sender,
                    FlowKind::Telnet { .. } => sender.with_paced_source(),
                    FlowKind::Short { packets } => sender.with_finite_transfer(packets),
                };
                let receiver = TcpReceiver::new(f.id, f.direction, f.b, f.window, &spec.tcp);
                events.schedule(SimTime::from_secs_f64(f.start), Priority::Timer, Event::FlowStart(f.id.0));
                let report = FlowReport {
                    id: f.id,
                    direction: f.direction,
                    kind: f.kind,
                    ld: f.ld,
                    window: f.window,
                    start: f.start,
                    b: f.b,
                    delivered_packets: 0,
                    delivered_bytes: 0,
                    bins: vec![0; nbins],
                    ap_drops: 0,
                    sta_drops: 0,
                    retry_drops: 0,
                    mac_enqueued: 0,
                    data_offered_steady: 0,
                    data_lost_steady: 0,
                    app_packets: 0,
                    completion_time: None,
                    sender: Default::default(),
                    receiver: Default::default(),
                    final_cwnd: 0.0,
                };
                FlowState {
                    spec: f,
                    sender,
                    receiver,
                    node: i + 1,
                    rto_event: None,
                    delack_event: None,
                    report,
                    acks_delivered: 0,
                    acks_filtered: 0,
                    data_lost: 0,
                    acks_lost: 0,
                }
            })
            .collect();
        Ok(Simulator {
            spec: spec.clone(),
            seed,
            flows,
            dcf,
            events,
            mac_rng: ChaCha8Rng::seed_from_u64(seed),
            app_rng: ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15),
            control: Control::None,
            attached: false,
            accf_log: false,
            tx_epoch: 0,
            scheduled_tx: None,
            end: SimTime::from_secs_f64(spec.duration),
            warmup: SimTime::from_secs_f64(spec.warmup),
            nbins,
            ap_enqueued_steady: 0,
            ap_drops_steady: 0,
            processed: 0,
            trace: None,
        })
    }

    /// Put a control block on the AP's packet path. Only one attachment is
    /// allowed per simulator.
    pub fn attach_control_block(&mut self, block: ControlBlock) -> Result<()> {
        if self.attached {
            return Err(Error::AlreadyAttached);
        }
        self.attached = true;
        self.control = match block {
            ControlBlock::None => Control::None,
            ControlBlock::Fcwa => {
                let mut cfg = FcwaConfig::new(self.spec.bs_ap, self.spec.timing, self.spec.tcp.data_size, self.spec.tcp.ack_size);
                cfg.ct_mode = self.spec.fcwa_ct;
                Control::Fcwa(Box::new(Fcwa::new(cfg)?))
            }
            ControlBlock::Accf => {
                let mut accf = Accf::new(self.spec.accf)?;
                if self.accf_log {
                    accf = accf.with_decision_log();
                }
                Control::Accf(Box::new(accf))
            }
        };
        Ok(())
    }

    /// Keep every ACCF decision in the report.
    pub fn log_accf_decisions(&mut self) {
        self.accf_log = true;
        if let Control::Accf(a) = &mut self.control {
            let taken = std::mem::replace(a.as_mut(), Accf::new(self.spec.accf).expect("validated params"));
            **a = taken.with_decision_log();
        }
    }

    /// Write one line per MAC event to `out`.
    pub fn set_trace(&mut self, out: Box<dyn Write>) {
        self.trace = Some(out);
    }

    pub fn run(mut self) -> Result<RunReport> {
        if let Some(t) = self.trace.as_mut() {
            writeln!(t, "# time_ns node event flow kind outcome")?;
        }
        while let Some(t) = self.events.peek_time() {
            if t > self.end {
                break;
            }
            let (now, ev) = self.events.pop().expect("peeked");
            self.processed += 1;
            self.dispatch(now, ev)?;
        }
        if let Some(t) = self.trace.as_mut() {
            t.flush()?;
        }
        self.audit()?;
        Ok(self.finish())
    }

    fn dispatch(&mut self, now: SimTime, ev: Event) -> Result<()> {
        match ev {
            Event::TxStart(epoch) => {
                if epoch == self.tx_epoch {
                    self.scheduled_tx = None;
                    self.start_tx(now)?;
                }
            }
            Event::TxEnd => self.end_tx(now)?,
            Event::AtAp(frame) => self.at_ap(frame, now)?,
            Event::AtHost(frame) => self.at_host(frame, now)?,
            Event::Rto(f) => {
                let fs = &mut self.flows[f as usize];
                if fs.rto_event == Some(now) {
                    fs.rto_event = None;
                }
                if fs.sender.rto_deadline().is_some_and(|d| d <= now) {
                    fs.sender.on_timeout(now);
                    let frames = fs.sender.on_send_opportunity(now);
                    self.send_data(f, frames, now)?;
                }
                self.sync_timers(f);
            }
            Event::DelayedAck(f) => {
                let fs = &mut self.flows[f as usize];
                if fs.delack_event == Some(now) {
                    fs.delack_event = None;
                }
                if let Some(ack) = fs.receiver.on_delack_timer(now) {
                    self.send_ack(f, ack, now)?;
                }
                self.sync_timers(f);
            }
            Event::AccfTimer(f) => {
                if let Control::Accf(a) = &mut self.control {
                    if a.timer_deadline(FlowId(f)) == Some(now) {
                        if let Some(ack) = a.on_timer_expire(FlowId(f), now) {
                            self.enqueue(AP, ack, now)?;
                        }
                    }
                }
            }
            Event::FlowStart(f) => {
                if let FlowKind::Telnet { .. } = self.flows[f as usize].spec.kind {
                    self.schedule_app_packet(f, now);
                } else {
                    let frames = self.flows[f as usize].sender.on_send_opportunity(now);
                    self.send_data(f, frames, now)?;
                    self.sync_timers(f);
                }
            }
            Event::AppPacket(f) => {
                let fs = &mut self.flows[f as usize];
                fs.sender.offer(1);
                fs.report.app_packets += 1;
                let frames = fs.sender.on_send_opportunity(now);
                self.send_data(f, frames, now)?;
                self.sync_timers(f);
                self.schedule_app_packet(f, now);
            }
        }
        Ok(())
    }

    fn schedule_app_packet(&mut self, f: u32, now: SimTime) {
        let FlowKind::Telnet { rate_bps } = self.flows[f as usize].spec.kind else { return };
        let mean = f64::from(self.spec.tcp.data_size) * 8.0 / rate_bps;
        let u: f64 = self.app_rng.random();
        let gap = -mean * (1.0 - u).ln();
        self.events.schedule(now + SimTime::from_secs_f64(gap), Priority::Timer, Event::AppPacket(f));
    }

    fn sync_timers(&mut self, f: u32) {
        let fs = &mut self.flows[f as usize];
        if let Some(d) = fs.sender.rto_deadline() {
            if fs.rto_event.is_none_or(|e| d < e) {
                fs.rto_event = Some(d);
                self.events.schedule(d, Priority::Timer, Event::Rto(f));
            }
        }
        if let Some(d) = fs.receiver.delack_deadline() {
            if fs.delack_event.is_none_or(|e| d < e) {
                fs.delack_event = Some(d);
                self.events.schedule(d, Priority::Timer, Event::DelayedAck(f));
            }
        }
    }

    fn sync_mac(&mut self) {
        let next = self.dcf.next_tx_time();
        if next != self.scheduled_tx {
            self.tx_epoch += 1;
            self.scheduled_tx = next;
            if let Some(t) = next {
                self.events.schedule(t, Priority::Slot, Event::TxStart(self.tx_epoch));
            }
        }
    }

    fn enqueue(&mut self, node: usize, mut frame: Frame, now: SimTime) -> Result<()> {
        frame.enqueue_time = now;
        let f = frame.flow.0 as usize;
        let steady = now >= self.warmup;
        if steady && frame.is_data() {
            self.flows[f].report.data_offered_steady += 1;
        }
        match self.dcf.enqueue(node, frame, now, &mut self.mac_rng) {
            Ok(()) => {
                self.flows[f].report.mac_enqueued += 1;
                if node == AP && steady {
                    self.ap_enqueued_steady += 1;
                }
            }
            Err(frame) => {
                let fs = &mut self.flows[f];
                if node == AP {
                    fs.report.ap_drops += 1;
                    if steady {
                        self.ap_drops_steady += 1;
                    }
                } else {
                    fs.report.sta_drops += 1;
                }
                if frame.is_data() {
                    fs.data_lost += 1;
                    if steady {
                        fs.report.data_lost_steady += 1;
                    }
                } else {
                    fs.acks_lost += 1;
                }
            }
        }
        self.sync_mac();
        Ok(())
    }

    fn wired(&mut self, f: u32, frame: Frame, now: SimTime, to_ap: bool) {
        let at = now + SimTime::from_secs_f64(self.flows[f as usize].spec.ld);
        let ev = if to_ap { Event::AtAp(frame) } else { Event::AtHost(frame) };
        self.events.schedule(at, Priority::Timer, ev);
    }

    fn send_data(&mut self, f: u32, frames: Vec<Frame>, now: SimTime) -> Result<()> {
        let (direction, node) = {
            let fs = &self.flows[f as usize];
            (fs.spec.direction, fs.node)
        };
        for frame in frames {
            match direction {
                Direction::Down => self.wired(f, frame, now, true),
                Direction::Up => self.enqueue(node, frame, now)?,
            }
        }
        Ok(())
    }

    fn send_ack(&mut self, f: u32, ack: Frame, now: SimTime) -> Result<()> {
        let fs = &self.flows[f as usize];
        match fs.spec.direction {
            Direction::Down => {
                let node = fs.node;
                self.enqueue(node, ack, now)
            }
            Direction::Up => {
                self.wired(f, ack, now, true);
                Ok(())
            }
        }
    }

    fn deliver_data(&mut self, f: u32, frame: Frame, now: SimTime) -> Result<()> {
        let fs = &mut self.flows[f as usize];
        let out = fs.receiver.on_data(&frame, now);
        if out.delivered > 0 {
            let bytes = out.delivered * u64::from(self.spec.tcp.data_size);
            fs.report.delivered_packets += out.delivered;
            fs.report.delivered_bytes += bytes;
            let bin = ((now.as_secs_f64() / BIN_WIDTH) as usize).min(self.nbins - 1);
            fs.report.bins[bin] += bytes;
        }
        if let Some(ack) = out.ack {
            self.send_ack(f, ack, now)?;
        }
        self.sync_timers(f);
        Ok(())
    }

    fn deliver_ack(&mut self, f: u32, ack: Frame, now: SimTime) -> Result<()> {
        let fs = &mut self.flows[f as usize];
        fs.acks_delivered += 1;
        if fs.sender.is_complete() {
            return Ok(());
        }
        let retransmit = fs.sender.on_ack(&ack, now)?;
        let mut frames: Vec<Frame> = retransmit.into_iter().collect();
        frames.extend(fs.sender.on_send_opportunity(now));
        if fs.sender.is_complete() && fs.report.completion_time.is_none() {
            fs.report.completion_time = Some(now.as_secs_f64() - fs.spec.start);
        }
        self.send_data(f, frames, now)?;
        self.sync_timers(f);
        Ok(())
    }

    fn at_ap(&mut self, frame: Frame, now: SimTime) -> Result<()> {
        match &mut self.control {
            Control::None => self.enqueue(AP, frame, now),
            Control::Fcwa(fcwa) => {
                fcwa.observe(&frame, Hop::FromWired, now);
                let frame = if frame.is_ack() { fcwa.rewrite_window(frame, now) } else { frame };
                self.enqueue(AP, frame, now)
            }
            Control::Accf(accf) => {
                accf.update_rates(&frame, now);
                if !(frame.is_ack() && frame.direction == Direction::Up) {
                    return self.enqueue(AP, frame, now);
                }
                let f = frame.flow.0;
                let filtered_before = accf.stats.replaced + accf.stats.superseded;
                let action = accf.on_ack_arrival(frame, now);
                let filtered = accf.stats.replaced + accf.stats.superseded - filtered_before;
                self.flows[f as usize].acks_filtered += filtered;
                match action {
                    AccfAction::ReleaseNow(ack) | AccfAction::Bypass(ack) => self.enqueue(AP, ack, now),
                    AccfAction::BufferUntil(deadline) => {
                        self.events.schedule(deadline, Priority::Timer, Event::AccfTimer(f));
                        Ok(())
                    }
                }
            }
        }
    }

    fn at_host(&mut self, frame: Frame, now: SimTime) -> Result<()> {
        let f = frame.flow.0;
        if frame.is_data() {
            self.deliver_data(f, frame, now)
        } else {
            self.deliver_ack(f, frame, now)
        }
    }

    /// A frame a station got across to the AP, heading for the wire.
    fn relay_to_wired(&mut self, mut frame: Frame, now: SimTime) {
        if let Control::Fcwa(fcwa) = &mut self.control {
            fcwa.observe(&frame, Hop::ToWired, now);
            if frame.is_ack() {
                frame = fcwa.rewrite_window(frame, now);
            }
        }
        let f = frame.flow.0;
        self.wired(f, frame, now, false);
    }

    fn start_tx(&mut self, now: SimTime) -> Result<()> {
        let Some(end) = self.dcf.start_tx(now, &mut self.mac_rng).map(|tx| tx.end) else {
            self.sync_mac();
            return Ok(());
        };
        if let (Some(t), Some(tx)) = (self.trace.as_mut(), self.dcf.current()) {
            for &n in &tx.nodes {
                let frame = self.dcf.node(n).queue().next().expect("transmitting node has a frame");
                writeln!(t, "{} {} tx_start {} {} -", now.as_nanos(), n, frame.flow, kind_str(frame))?;
            }
        }
        self.events.schedule(end, Priority::TransmissionEnd, Event::TxEnd);
        Ok(())
    }

    fn end_tx(&mut self, now: SimTime) -> Result<()> {
        let outcome = self.dcf.current().map(|t| t.outcome);
        let nodes = self.dcf.current().map(|t| t.nodes.clone()).unwrap_or_default();
        if let (Some(t), Some(outcome)) = (self.trace.as_mut(), outcome) {
            if outcome != TxOutcome::Success {
                let label = if outcome == TxOutcome::Collision { "collision" } else { "channel_error" };
                for &n in &nodes {
                    let frame = self.dcf.node(n).queue().next().expect("transmitting node has a frame");
                    writeln!(t, "{} {} tx_end {} {} {}", now.as_nanos(), n, frame.flow, kind_str(frame), label)?;
                }
            }
        }
        let done = self.dcf.finish_tx(now, &mut self.mac_rng);
        if let Control::Fcwa(fcwa) = &mut self.control {
            if done.iter().any(|c| matches!(c, Completion::Delivered { node: AP, .. })) {
                fcwa.observe_ap_success(now, self.dcf.node(AP).queue_len() > 0);
            }
        }
        for c in done {
            match c {
                Completion::Delivered { node, frame, .. } => {
                    if let Some(t) = self.trace.as_mut() {
                        writeln!(t, "{} {} tx_end {} {} success", now.as_nanos(), node, frame.flow, kind_str(&frame))?;
                    }
                    let f = frame.flow.0;
                    if node == AP {
                        if frame.is_data() {
                            self.deliver_data(f, frame, now)?;
                        } else {
                            self.deliver_ack(f, frame, now)?;
                        }
                    } else {
                        self.relay_to_wired(frame, now);
                    }
                }
                Completion::Dropped { node, frame } => {
                    if let Some(t) = self.trace.as_mut() {
                        writeln!(t, "{} {} drop {} {} retry_limit", now.as_nanos(), node, frame.flow, kind_str(&frame))?;
                    }
                    let fs = &mut self.flows[frame.flow.0 as usize];
                    fs.report.retry_drops += 1;
                    if frame.is_data() {
                        fs.data_lost += 1;
                    } else {
                        fs.acks_lost += 1;
                    }
                }
            }
        }
        self.sync_mac();
        Ok(())
    }

    /// Every packet a flow sent is accounted for: received, lost, filtered,
    /// or still somewhere in the network.
    fn audit(&self) -> Result<()> {
        let n = self.flows.len();
        let mut data_inflight = vec![0u64; n];
        let mut acks_inflight = vec![0u64; n];
        let mut count = |frame: &Frame| {
            let f = frame.flow.0 as usize;
            if frame.is_data() {
                data_inflight[f] += 1;
            } else {
                acks_inflight[f] += 1;
            }
        };
        for node in self.dcf.nodes() {
            node.queue().for_each(&mut count);
        }
        for (_, ev) in self.events.iter() {
            if let Event::AtAp(frame) | Event::AtHost(frame) = ev {
                count(frame);
            }
        }
        if let Control::Accf(a) = &self.control {
            for fs in &self.flows {
                if let Some(b) = a.buffered(fs.spec.id) {
                    count(b);
                }
            }
        }
        for (i, fs) in self.flows.iter().enumerate() {
            let sent = fs.sender.stats.segments_sent;
            let accounted = fs.receiver.stats.segments_received + fs.data_lost + data_inflight[i];
            if sent != accounted {
                return Err(Error::Invariant(format!(
                    "flow {}: {sent} data packets sent but {} received + {} lost + {} in flight",
                    fs.spec.id, fs.receiver.stats.segments_received, fs.data_lost, data_inflight[i]
                )));
            }
            let acks = fs.receiver.stats.acks_sent;
            let accounted = fs.acks_delivered + fs.acks_lost + fs.acks_filtered + acks_inflight[i];
            if acks != accounted {
                return Err(Error::Invariant(format!(
                    "flow {}: {acks} ACKs sent but {} delivered + {} lost + {} filtered + {} in flight",
                    fs.spec.id, fs.acks_delivered, fs.acks_lost, fs.acks_filtered, acks_inflight[i]
                )));
            }
        }
        let ap = self.dcf.node(AP);
        if ap.queue_len() > ap.capacity() {
            return Err(Error::Invariant("AP queue above capacity".into()));
        }
        Ok(())
    }

    fn finish(self) -> RunReport {
        let ap = &self.dcf.node(AP).stats;
        let (window_log, fcwa_stats, accf_stats, accf_decisions) = match self.control {
            Control::None => (Vec::new(), None, None, Vec::new()),
            Control::Fcwa(f) => (f.window_log().to_vec(), Some(f.stats.clone()), None, Vec::new()),
            Control::Accf(mut a) => {
                let d = a.take_decisions();
                (Vec::new(), None, Some(a.stats.clone()), d)
            }
        };
        RunReport {
            scenario: self.spec.name.clone(),
            seed: self.seed,
            control: self.spec.control,
            duration: self.spec.duration,
            warmup: self.spec.warmup,
            bin_width: BIN_WIDTH,
            ap_enqueued: ap.enqueued,
            ap_queue_drops: ap.queue_drops,
            ap_enqueued_steady: self.ap_enqueued_steady,
            ap_queue_drops_steady: self.ap_drops_steady,
            retry_histogram: self.dcf.retry_histogram().to_vec(),
            node_stats: self.dcf.nodes().iter().map(|n| n.stats.clone()).collect(),
            window_log,
            fcwa_stats,
            accf_stats,
            accf_decisions,
            events: self.processed,
            flows: self
                .flows
                .into_iter()
                .map(|fs| {
                    let mut r = fs.report;
                    r.sender = fs.sender.stats.clone();
                    r.receiver = fs.receiver.stats.clone();
                    r.final_cwnd = fs.sender.cwnd;
                    r
                })
                .collect(),
        }
    }
}

fn kind_str(frame: &Frame) -> &'static str {
    if frame.is_data() {
        "data"
    } else {
        "ack"
    }
}

/// Run a scenario once with the given seed.
pub fn run(spec: &ScenarioSpec, seed: u64) -> Result<RunReport> {
    Simulator::new(spec, seed)?.run()
}
