// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// http://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or http://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.
//! Scenario description and its line-oriented text format.
//!
//! ```text
//! name = uplink_only
//! duration = 350
//! control = accf
//! flow {
//!   direction = up
//!   count = 15
//!   kind = ftp
//!   ld = arith(0.010, 0.002)
//!   start = ramp(0, 1, 0.5)
//!   window = cycle(12, 20, 42, 84)
//! }
//! sweep = flow.0.count : 5, 10, 15
//! ```
//!
//! Keys not given keep their defaults. `serialize` writes every key, so
//! parse → serialize → parse is the identity.

use std::fmt::Write as _;

use crate::accf::{AccfParams, GammaShape};
use crate::analytic::MacTiming;
use crate::error::{Error, Result};
use crate::fcwa::CtMode;
use crate::frame::{Direction, FlowId};
use crate::tcp::{TcpConfig, WindowGrowth};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlBlock {
    None,
    Fcwa,
    Accf,
}

impl ControlBlock {
    pub fn as_str(self) -> &'static str {
        match self {
            ControlBlock::None => "none",
            ControlBlock::Fcwa => "fcwa",
            ControlBlock::Accf => "accf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowKind {
    /// Bulk transfer that never runs out of data.
    Ftp,
    /// Application-paced source with exponential packet interarrivals.
    Telnet { rate_bps: f64 },
    /// Fixed-size transfer; the flow leaves once it is acknowledged.
    Short { packets: u64 },
}

impl FlowKind {
    pub fn is_saturated(&self) -> bool {
        matches!(self, FlowKind::Ftp)
    }
}

/// Per-flow value as a function of the flow's position in its group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    Constant(f64),
    Arith { first: f64, step: f64 },
    /// Gaps between neighbours grow by `increment` per flow.
    Ramp { first: f64, step: f64, increment: f64 },
}

impl Schedule {
    pub fn value(&self, k: u32) -> f64 {
        match *self {
            Schedule::Constant(v) => v,
            Schedule::Arith { first, step } => first + step * f64::from(k),
            Schedule::Ramp { first, step, increment } => {
                let k = f64::from(k);
                first + step * k + increment * k * (k - 1.0) / 2.0
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WindowSchedule {
    Constant(u32),
    /// Flow `k` gets `values[k % len]`.
    Cycle(Vec<u32>),
}

impl WindowSchedule {
    pub fn value(&self, k: u32) -> u32 {
        match self {
            WindowSchedule::Constant(w) => *w,
            WindowSchedule::Cycle(v) => v[k as usize % v.len()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowGroup {
    pub direction: Direction,
    pub count: u32,
    pub kind: FlowKind,
    /// One-way wired delay, seconds.
    pub ld: Schedule,
    /// Receiver advertised window, packets.
    pub window: WindowSchedule,
    /// Start time, seconds.
    pub start: Schedule,
    /// Delayed-ACK factor of the receivers.
    pub b: u32,
}

impl Default for FlowGroup {
    fn default() -> Self {
        FlowGroup {
            direction: Direction::Down,
            count: 1,
            kind: FlowKind::Ftp,
            ld: Schedule::Constant(0.05),
            window: WindowSchedule::Constant(42),
            start: Schedule::Constant(0.0),
            b: 1,
        }
    }
}

/// One flow after group expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub id: FlowId,
    pub direction: Direction,
    pub kind: FlowKind,
    pub ld: f64,
    pub window: u32,
    pub start: f64,
    pub b: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub key: String,
    pub values: Vec<String>,
}

/// Sweep settings of one point and the scenario they produce.
pub type SweepPoint = (Vec<(String, String)>, ScenarioSpec);

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    /// Simulated seconds.
    pub duration: f64,
    /// Seconds excluded from long-run averages.
    pub warmup: f64,
    pub bs_ap: u32,
    pub sta_queue: u32,
    pub per: f64,
    pub control: ControlBlock,
    pub timing: MacTiming,
    pub tcp: TcpConfig,
    pub accf: AccfParams,
    pub fcwa_ct: CtMode,
    pub seeds: Vec<u64>,
    pub flows: Vec<FlowGroup>,
    pub sweeps: Vec<Sweep>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            name: "scenario".to_string(),
            duration: 350.0,
            warmup: 20.0,
            bs_ap: 100,
            sta_queue: 100,
            per: 0.0,
            control: ControlBlock::None,
            timing: MacTiming::default(),
            tcp: TcpConfig::default(),
            accf: AccfParams::default(),
            fcwa_ct: CtMode::Model,
            seeds: vec![1],
            flows: Vec::new(),
            sweeps: Vec::new(),
        }
    }
}

fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.trim().parse().map_err(|_| format!("bad number '{}'", v.trim()))
}

/// `name(a, b, ...)` → (name, [a, b, ...]); a bare word has no arguments.
fn call(v: &str) -> std::result::Result<(&str, Vec<&str>), String> {
    let v = v.trim();
    match v.find('(') {
        None => Ok((v, Vec::new())),
        Some(open) => {
            let inner = v[open + 1..].strip_suffix(')').ok_or_else(|| format!("missing ')' in '{v}'"))?;
            let args = inner.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
            Ok((v[..open].trim(), args))
        }
    }
}

fn parse_schedule(v: &str) -> std::result::Result<Schedule, String> {
    match call(v)? {
        ("arith", args) if args.len() == 2 => Ok(Schedule::Arith { first: num(args[0])?, step: num(args[1])? }),
        ("ramp", args) if args.len() == 3 => {
            Ok(Schedule::Ramp { first: num(args[0])?, step: num(args[1])?, increment: num(args[2])? })
        }
        (word, args) if args.is_empty() => Ok(Schedule::Constant(num(word)?)),
        _ => Err(format!("expected a number, arith(first, step) or ramp(first, step, increment), got '{v}'")),
    }
}

fn fmt_schedule(s: &Schedule) -> String {
    match s {
        Schedule::Constant(v) => format!("{v}"),
        Schedule::Arith { first, step } => format!("arith({first}, {step})"),
        Schedule::Ramp { first, step, increment } => format!("ramp({first}, {step}, {increment})"),
    }
}

fn parse_window(v: &str) -> std::result::Result<WindowSchedule, String> {
    match call(v)? {
        ("cycle", args) if !args.is_empty() => {
            Ok(WindowSchedule::Cycle(args.iter().map(|a| num(a)).collect::<std::result::Result<_, _>>()?))
        }
        (word, args) if args.is_empty() => Ok(WindowSchedule::Constant(num(word)?)),
        _ => Err(format!("expected a window or cycle(w1, w2, ...), got '{v}'")),
    }
}

fn fmt_window(w: &WindowSchedule) -> String {
    match w {
        WindowSchedule::Constant(v) => v.to_string(),
        WindowSchedule::Cycle(v) => {
            format!("cycle({})", v.iter().map(u32::to_string).collect::<Vec<_>>().join(", "))
        }
    }
}

fn parse_kind(v: &str) -> std::result::Result<FlowKind, String> {
    match call(v)? {
        ("ftp", a) if a.is_empty() => Ok(FlowKind::Ftp),
        ("telnet", a) if a.len() == 1 => Ok(FlowKind::Telnet { rate_bps: num(a[0])? }),
        ("short", a) if a.len() <= 1 => Ok(FlowKind::Short { packets: a.first().map_or(Ok(31), |x| num(x))? }),
        _ => Err(format!("unknown flow kind '{v}' (ftp, telnet(bps), short(packets))")),
    }
}

fn fmt_kind(k: &FlowKind) -> String {
    match k {
        FlowKind::Ftp => "ftp".to_string(),
        FlowKind::Telnet { rate_bps } => format!("telnet({rate_bps})"),
        FlowKind::Short { packets } => format!("short({packets})"),
    }
}

fn parse_direction(v: &str) -> std::result::Result<Direction, String> {
    match v.trim() {
        "up" => Ok(Direction::Up),
        "down" => Ok(Direction::Down),
        other => Err(format!("direction must be up or down, got '{other}'")),
    }
}

impl FlowGroup {
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "direction" => self.direction = parse_direction(value)?,
            "count" => self.count = num(value)?,
            "kind" => self.kind = parse_kind(value)?,
            "ld" => self.ld = parse_schedule(value)?,
            "window" => self.window = parse_window(value)?,
            "start" => self.start = parse_schedule(value)?,
            "b" => self.b = num(value)?,
            _ => return Err(format!("unknown flow key '{key}'")),
        }
        Ok(())
    }

    fn write(&self, out: &mut String) {
        let _ = writeln!(out, "flow {{");
        let _ = writeln!(out, "  direction = {}", self.direction.as_str());
        let _ = writeln!(out, "  count = {}", self.count);
        let _ = writeln!(out, "  kind = {}", fmt_kind(&self.kind));
        let _ = writeln!(out, "  ld = {}", fmt_schedule(&self.ld));
        let _ = writeln!(out, "  window = {}", fmt_window(&self.window));
        let _ = writeln!(out, "  start = {}", fmt_schedule(&self.start));
        let _ = writeln!(out, "  b = {}", self.b);
        let _ = writeln!(out, "}}");
    }
}

impl ScenarioSpec {
    /// Set one top-level key; `flow.N.key` addresses a flow group.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        if let Some(rest) = key.strip_prefix("flow.") {
            let (idx, sub) = rest.split_once('.').ok_or_else(|| format!("expected flow.N.key, got '{key}'"))?;
            let idx: usize = num(idx)?;
            let n = self.flows.len();
            let group = self.flows.get_mut(idx).ok_or_else(|| format!("flow group {idx} does not exist ({n} defined)"))?;
            return group.set(sub, v);
        }
        let t = &mut self.timing;
        match key {
            "name" => self.name = v.to_string(),
            "duration" => self.duration = num(v)?,
            "warmup" => self.warmup = num(v)?,
            "bs_ap" => self.bs_ap = num(v)?,
            "sta_queue" => self.sta_queue = num(v)?,
            "per" => self.per = num(v)?,
            "control" => {
                self.control = match v {
                    "none" => ControlBlock::None,
                    "fcwa" => ControlBlock::Fcwa,
                    "accf" => ControlBlock::Accf,
                    _ => return Err(format!("control must be none, fcwa or accf, got '{v}'")),
                }
            }
            "seeds" => self.seeds = v.split(',').map(num).collect::<std::result::Result<_, _>>()?,
            "mac.slot_time" => t.slot_time = num(v)?,
            "mac.sifs" => t.sifs = num(v)?,
            "mac.difs" => t.difs = num(v)?,
            "mac.data_rate" => t.data_rate = num(v)?,
            "mac.basic_rate" => t.basic_rate = num(v)?,
            "mac.cw_min" => t.cw_min = num(v)?,
            "mac.cw_max" => t.cw_max = num(v)?,
            "mac.retry_limit" => t.retry_limit = num(v)?,
            "mac.ack_duration" => t.mac_ack_duration = num(v)?,
            "mac.phy_header" => t.phy_header_duration = num(v)?,
            "mac.overhead_bytes" => t.mac_overhead_bytes = num(v)?,
            "tcp.data_size" => self.tcp.data_size = num(v)?,
            "tcp.ack_size" => self.tcp.ack_size = num(v)?,
            "tcp.initial_cwnd" => self.tcp.initial_cwnd = num(v)?,
            "tcp.growth" => {
                self.tcp.growth = match v {
                    "packet" => WindowGrowth::PerPacket,
                    "ack" => WindowGrowth::PerAck,
                    _ => return Err(format!("tcp.growth must be packet or ack, got '{v}'")),
                }
            }
            "tcp.initial_rto" => self.tcp.initial_rto = num(v)?,
            "tcp.min_rto" => self.tcp.min_rto = num(v)?,
            "tcp.max_rto" => self.tcp.max_rto = num(v)?,
            "tcp.delayed_ack" => self.tcp.delayed_ack_timeout = num(v)?,
            "accf.alpha" => self.accf.alpha = num(v)?,
            "accf.beta" => self.accf.beta = num(v)?,
            "accf.gamma_min" => self.accf.gamma_min = num(v)?,
            "accf.num_thresh" => self.accf.num_thresh = num(v)?,
            "accf.gamma" => {
                self.accf.gamma_shape = match v {
                    "step" => GammaShape::Step,
                    "ramp" => GammaShape::LinearRamp,
                    _ => return Err(format!("accf.gamma must be step or ramp, got '{v}'")),
                }
            }
            "accf.ewma" => self.accf.ewma_weight = num(v)?,
            "accf.expiry" => self.accf.estimator_expiry = num(v)?,
            "fcwa.ct" => {
                self.fcwa_ct = match call(v)? {
                    ("model", a) if a.is_empty() => CtMode::Model,
                    ("measured", a) if a.len() <= 1 => CtMode::Measured { window: a.first().map_or(Ok(200), |x| num(x))? },
                    _ => return Err(format!("fcwa.ct must be model or measured(N), got '{v}'")),
                }
            }
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = ScenarioSpec::default();
        let mut group: Option<FlowGroup> = None;
        let err = |line: usize, msg: String| Error::Parse { line, msg };
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line == "}" {
                let g = group.take().ok_or_else(|| err(line_no, "'}' without an open flow block".into()))?;
                spec.flows.push(g);
                continue;
            }
            if let Some(rest) = line.strip_prefix("flow") {
                if rest.trim() == "{" {
                    if group.is_some() {
                        return Err(err(line_no, "flow blocks cannot nest".into()));
                    }
                    group = Some(FlowGroup::default());
                    continue;
                }
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(line_no, format!("expected key = value, got '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            let result = match (group.as_mut(), key) {
                (Some(g), _) => g.set(key, value),
                (None, "sweep") => parse_sweep(value).map(|s| spec.sweeps.push(s)),
                (None, _) => spec.set(key, value),
            };
            result.map_err(|m| err(line_no, m))?;
        }
        if group.is_some() {
            return Err(err(text.lines().count(), "unterminated flow block".into()));
        }
        Ok(spec)
    }

    pub fn serialize(&self) -> String {
        let mut o = String::new();
        let t = &self.timing;
        let a = &self.accf;
        let c = &self.tcp;
        let _ = writeln!(o, "name = {}", self.name);
        let _ = writeln!(o, "duration = {}", self.duration);
        let _ = writeln!(o, "warmup = {}", self.warmup);
        let _ = writeln!(o, "bs_ap = {}", self.bs_ap);
        let _ = writeln!(o, "sta_queue = {}", self.sta_queue);
        let _ = writeln!(o, "per = {}", self.per);
        let _ = writeln!(o, "control = {}", self.control.as_str());
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(o, "seeds = {}", seeds.join(", "));
        let _ = writeln!(o, "mac.slot_time = {}", t.slot_time);
        let _ = writeln!(o, "mac.sifs = {}", t.sifs);
        let _ = writeln!(o, "mac.difs = {}", t.difs);
        let _ = writeln!(o, "mac.data_rate = {}", t.data_rate);
        let _ = writeln!(o, "mac.basic_rate = {}", t.basic_rate);
        let _ = writeln!(o, "mac.cw_min = {}", t.cw_min);
        let _ = writeln!(o, "mac.cw_max = {}", t.cw_max);
        let _ = writeln!(o, "mac.retry_limit = {}", t.retry_limit);
        let _ = writeln!(o, "mac.ack_duration = {}", t.mac_ack_duration);
        let _ = writeln!(o, "mac.phy_header = {}", t.phy_header_duration);
        let _ = writeln!(o, "mac.overhead_bytes = {}", t.mac_overhead_bytes);
        let _ = writeln!(o, "tcp.data_size = {}", c.data_size);
        let _ = writeln!(o, "tcp.ack_size = {}", c.ack_size);
        let _ = writeln!(o, "tcp.initial_cwnd = {}", c.initial_cwnd);
        let growth = match c.growth {
            WindowGrowth::PerPacket => "packet",
            WindowGrowth::PerAck => "ack",
        };
        let _ = writeln!(o, "tcp.growth = {growth}");
        let _ = writeln!(o, "tcp.initial_rto = {}", c.initial_rto);
        let _ = writeln!(o, "tcp.min_rto = {}", c.min_rto);
        let _ = writeln!(o, "tcp.max_rto = {}", c.max_rto);
        let _ = writeln!(o, "tcp.delayed_ack = {}", c.delayed_ack_timeout);
        let _ = writeln!(o, "accf.alpha = {}", a.alpha);
        let _ = writeln!(o, "accf.beta = {}", a.beta);
        let _ = writeln!(o, "accf.gamma_min = {}", a.gamma_min);
        let _ = writeln!(o, "accf.num_thresh = {}", a.num_thresh);
        let shape = match a.gamma_shape {
            GammaShape::Step => "step",
            GammaShape::LinearRamp => "ramp",
        };
        let _ = writeln!(o, "accf.gamma = {shape}");
        let _ = writeln!(o, "accf.ewma = {}", a.ewma_weight);
        let _ = writeln!(o, "accf.expiry = {}", a.estimator_expiry);
        let ct = match self.fcwa_ct {
            CtMode::Model => "model".to_string(),
            CtMode::Measured { window } => format!("measured({window})"),
        };
        let _ = writeln!(o, "fcwa.ct = {ct}");
        for g in &self.flows {
            g.write(&mut o);
        }
        for s in &self.sweeps {
            let _ = writeln!(o, "sweep = {} : {}", s.key, s.values.join(", "));
        }
        o
    }

    /// Check every parameter before a run. Errors are `Error::Validation`.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return fail(format!("duration must be > 0, got {}", self.duration));
        }
        if !(self.warmup >= 0.0 && self.warmup < self.duration) {
            return fail(format!("warmup must be in [0, duration), got {}", self.warmup));
        }
        if self.bs_ap == 0 || self.sta_queue == 0 {
            return fail("queue capacities must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.per) {
            return fail(format!("per must be in [0, 1), got {}", self.per));
        }
        if self.seeds.is_empty() {
            return fail("at least one seed is required".into());
        }
        let as_validation = |e: Error| match e {
            Error::InvalidParameter(m) => Error::Validation(m),
            other => other,
        };
        self.timing.validate().map_err(as_validation)?;
        self.accf.validate().map_err(as_validation)?;
        let c = &self.tcp;
        if !(c.data_size > c.ack_size && c.ack_size > 0) {
            return fail("need tcp.data_size > tcp.ack_size > 0".into());
        }
        if !(c.initial_cwnd >= 1.0 && c.min_rto > 0.0 && c.initial_rto >= c.min_rto && c.max_rto >= c.initial_rto) {
            return fail("TCP timers need initial_cwnd >= 1 and 0 < min_rto <= initial_rto <= max_rto".into());
        }
        if !(c.delayed_ack_timeout > 0.0) {
            return fail("tcp.delayed_ack must be > 0".into());
        }
        if let CtMode::Measured { window: 0 } = self.fcwa_ct {
            return fail("fcwa.ct measurement window must be >= 1".into());
        }
        if self.flows.is_empty() {
            return fail("scenario has no flows".into());
        }
        for (i, g) in self.flows.iter().enumerate() {
            if g.count == 0 {
                return fail(format!("flow group {i}: count must be >= 1"));
            }
            if g.b == 0 {
                return fail(format!("flow group {i}: b must be >= 1"));
            }
            if let WindowSchedule::Cycle(v) = &g.window {
                if v.is_empty() {
                    return fail(format!("flow group {i}: empty window cycle"));
                }
            }
            match g.kind {
                FlowKind::Telnet { rate_bps } if !(rate_bps > 0.0 && rate_bps.is_finite()) => {
                    return fail(format!("flow group {i}: telnet rate must be > 0"));
                }
                FlowKind::Short { packets: 0 } => return fail(format!("flow group {i}: short flow needs >= 1 packet")),
                _ => {}
            }
        }
        let flows = self.expand_flows();
        if flows.len() > 4096 {
            return fail(format!("{} flows is more than the 4096 supported", flows.len()));
        }
        for f in &flows {
            if !(f.ld >= 0.0 && f.ld.is_finite()) {
                return fail(format!("flow {}: wired delay must be >= 0, got {}", f.id, f.ld));
            }
            if !(f.start >= 0.0 && f.start < self.duration) {
                return fail(format!("flow {}: start {} outside [0, duration)", f.id, f.start));
            }
            if f.window == 0 {
                return fail(format!("flow {}: window must be >= 1", f.id));
            }
        }
        for s in &self.sweeps {
            if s.values.is_empty() {
                return fail(format!("sweep over '{}' has no values", s.key));
            }
            for v in &s.values {
                let mut probe = self.clone();
                probe.sweeps.clear();
                probe.set(&s.key, v).map_err(|m| Error::Validation(format!("sweep {}: {m}", s.key)))?;
            }
        }
        Ok(())
    }

    /// Flows in declaration order with ids 0, 1, 2, ...
    pub fn expand_flows(&self) -> Vec<FlowSpec> {
        let mut out = Vec::new();
        for g in &self.flows {
            for k in 0..g.count {
                out.push(FlowSpec {
                    id: FlowId(out.len() as u32),
                    direction: g.direction,
                    kind: g.kind,
                    ld: g.ld.value(k),
                    window: g.window.value(k),
                    start: g.start.value(k),
                    b: g.b,
                });
            }
        }
        out
    }

    pub fn count(&self, direction: Direction) -> u32 {
        self.flows.iter().filter(|g| g.direction == direction).map(|g| g.count).sum()
    }

    /// Cartesian product of the sweep values, first sweep varying slowest.
    /// Each point carries its (key, value) assignments.
    pub fn sweep_points(&self) -> Result<Vec<SweepPoint>> {
        let mut base = self.clone();
        base.sweeps.clear();
        let mut points = vec![(Vec::new(), base)];
        for s in &self.sweeps {
            let mut next = Vec::with_capacity(points.len() * s.values.len());
            for (assigned, spec) in &points {
                for v in &s.values {
                    let mut spec = spec.clone();
                    spec.set(&s.key, v).map_err(|m| Error::Validation(format!("sweep {}: {m}", s.key)))?;
                    let mut assigned = assigned.clone();
                    assigned.push((s.key.clone(), v.clone()));
                    next.push((assigned, spec));
                }
            }
            points = next;
        }
        Ok(points)
    }
}

fn parse_sweep(v: &str) -> std::result::Result<Sweep, String> {
    let (key, values) = v.split_once(':').ok_or("expected 'sweep = key : v1, v2, ...'")?;
    let values: Vec<String> = split_top_level(values).into_iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    if values.is_empty() {
        return Err("sweep needs at least one value".into());
    }
    Ok(Sweep { key: key.trim().to_string(), values })
}

/// Split on commas that are not inside parentheses.
fn split_top_level(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "
# mixed traffic
name = mixed
duration = 100
control = accf
seeds = 1, 2
flow {
  direction = up
  count = 3
  ld = arith(0.01, 0.002)
  window = cycle(12, 20, 42, 84)
}
flow {
  direction = down
  count = 2
  kind = telnet(150000)
  start = arith(0, 10)
  b = 2
}
sweep = flow.1.count : 5, 10
sweep = control : none, accf
";

    #[test]
    fn parses_sample() {
        let s = ScenarioSpec::parse(SAMPLE).unwrap();
        assert_eq!(s.name, "mixed");
        assert_eq!(s.control, ControlBlock::Accf);
        assert_eq!(s.seeds, vec![1, 2]);
        let flows = s.expand_flows();
        assert_eq!(flows.len(), 5);
        assert!((flows[2].ld - 0.014).abs() < 1e-12);
        assert_eq!(flows[2].window, 42);
        assert_eq!(flows[4].start, 10.0);
        assert_eq!(flows[4].kind, FlowKind::Telnet { rate_bps: 150000.0 });
        s.validate().unwrap();
    }

    #[test]
    fn round_trip() {
        let s = ScenarioSpec::parse(SAMPLE).unwrap();
        let again = ScenarioSpec::parse(&s.serialize()).unwrap();
        assert_eq!(s, again);
        assert_eq!(s.serialize(), again.serialize());
    }

    #[test]
    fn sweep_expansion() {
        let s = ScenarioSpec::parse(SAMPLE).unwrap();
        let points = s.sweep_points().unwrap();
        assert_eq!(points.len(), 4);
        assert_eq!(points[1].0, vec![("flow.1.count".to_string(), "5".to_string()), ("control".to_string(), "accf".to_string())]);
        assert_eq!(points[3].1.expand_flows().len(), 13);
        assert!(points.iter().all(|(_, p)| p.sweeps.is_empty()));
    }

    #[test]
    fn ramp_gaps_grow() {
        let s = parse_schedule("ramp(0.001, 0.002, 0.001)").unwrap();
        let v: Vec<f64> = (0..5).map(|k| s.value(k)).collect();
        for (got, want) in v.iter().zip([0.001, 0.003, 0.006, 0.010, 0.015]) {
            assert!((got - want).abs() < 1e-15, "{v:?}");
        }
        assert_eq!(parse_schedule(&fmt_schedule(&s)).unwrap(), s);
    }

    #[test]
    fn parse_errors_carry_lines() {
        for (text, line) in [
            ("duration = 10\nbogus = 1\n", 2),
            ("flow {\n  kind = carrier_pigeon\n}\n", 2),
            ("flow {\n  count = 2\n", 2),
            ("}\n", 1),
            ("duration 10\n", 1),
        ] {
            match ScenarioSpec::parse(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn validation_errors() {
        let ok = ScenarioSpec::parse(SAMPLE).unwrap();
        let mut s = ok.clone();
        s.flows.clear();
        assert!(matches!(s.validate(), Err(Error::Validation(_))));
        let mut s = ok.clone();
        s.per = 1.5;
        assert!(matches!(s.validate(), Err(Error::Validation(_))));
        let mut s = ok.clone();
        s.flows[0].ld = Schedule::Arith { first: 0.01, step: -0.01 };
        assert!(matches!(s.validate(), Err(Error::Validation(_))));
        let mut s = ok.clone();
        s.accf.alpha = 0.5;
        assert!(matches!(s.validate(), Err(Error::Validation(_))));
        let mut s = ok;
        s.sweeps.push(Sweep { key: "flow.9.count".into(), values: vec!["1".into()] });
        assert!(matches!(s.validate(), Err(Error::Validation(_))));
    }
}
