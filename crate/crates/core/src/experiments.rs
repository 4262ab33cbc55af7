// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// http://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or http://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.
//! Parameterized variants of the bundled scenarios used by the replication
//! runner and the acceptance suite.

use crate::analytic::{w_lim, TrafficMix, WindowLimitResult};
use crate::catalogue;
use crate::error::{invalid, Result};
use crate::frame::Direction;
use crate::scenario::{ControlBlock, FlowGroup, FlowKind, Schedule, ScenarioSpec, WindowSchedule};

fn load(name: &str) -> ScenarioSpec {
    catalogue::load(name).expect("bundled scenarios parse")
}

/// Apply `key = value` overrides in order.
pub fn with(mut spec: ScenarioSpec, overrides: &[(&str, String)]) -> Result<ScenarioSpec> {
    for (k, v) in overrides {
        spec.set(k, v).map_err(|m| invalid(format!("{k} = {v}: {m}")))?;
    }
    Ok(spec)
}

fn set_counts(spec: &mut ScenarioSpec, up: u32, down: u32) {
    for g in &mut spec.flows {
        if matches!(g.kind, FlowKind::Ftp) {
            g.count = if g.direction == Direction::Up { up } else { down };
        }
    }
}

fn set_windows(spec: &mut ScenarioSpec, w: u32) {
    for g in &mut spec.flows {
        g.window = WindowSchedule::Constant(w);
    }
}

fn set_b(spec: &mut ScenarioSpec, b: u32) {
    for g in &mut spec.flows {
        g.b = b;
    }
}

/// Equal 50 ms delays, `n` flows each way, every window fixed to `window`.
pub fn equal_ld(n: u32, b: u32, window: u32) -> ScenarioSpec {
    let mut s = load("fig5_equal_ld");
    set_counts(&mut s, n, n);
    set_b(&mut s, b);
    set_windows(&mut s, window);
    s.name = format!("equal_ld_n{n}_b{b}_w{window}");
    s
}

/// Analytic window limit for a scenario whose flows share one delay and one b.
pub fn uniform_limit(spec: &ScenarioSpec) -> Result<WindowLimitResult> {
    let flows = spec.expand_flows();
    let first = flows.first().ok_or_else(|| invalid("scenario has no flows"))?;
    if flows.iter().any(|f| f.ld != first.ld || f.b != first.b) {
        return Err(invalid("flows differ in delay or b"));
    }
    let mix = TrafficMix::new(spec.count(Direction::Up), spec.count(Direction::Down), f64::from(first.b));
    w_lim(first.ld, &mix, f64::from(spec.bs_ap), &spec.timing)
}

/// The comparison rule: every window fixed to `BS_AP / (n_up + n_down)`,
/// no control block.
pub fn baseline(spec: &ScenarioSpec) -> ScenarioSpec {
    let mut s = spec.clone();
    let n = spec.count(Direction::Up) + spec.count(Direction::Down);
    set_windows(&mut s, (spec.bs_ap / n.max(1)).max(1));
    s.control = ControlBlock::None;
    s.name = format!("{}_baseline", spec.name);
    s
}

pub fn fcwa_basic(n: u32) -> ScenarioSpec {
    let mut s = load("fig6_fcwa_basic");
    set_counts(&mut s, n, n);
    s.name = format!("fcwa_basic_n{n}");
    s
}

/// `n` uplink then `n` downlink flows. Connection `m` (from 1, uplinks
/// first) has a wired delay `m` ms longer than connection `m - 1`, starting
/// at 1 ms.
pub fn fcwa_varying_ld(n: u32) -> ScenarioSpec {
    let mut s = load("fig7_fcwa_varying_ld");
    set_counts(&mut s, n, n);
    for g in &mut s.flows {
        let before = if g.direction == Direction::Down { f64::from(n) } else { 0.0 };
        g.ld = Schedule::Ramp { first: 0.0005 * (before + 1.0) * (before + 2.0), step: 0.001 * (before + 2.0), increment: 0.001 };
    }
    s.name = format!("fcwa_varying_ld_n{n}");
    s
}

/// Flows per direction in the varying-delay runs.
pub const VARYING_LD_SIZES: [u32; 4] = [3, 5, 8, 10];

pub fn fcwa_delayed(up: u32, down: u32) -> ScenarioSpec {
    let mut s = load("fig8_fcwa_delayed");
    s.sweeps.clear();
    set_counts(&mut s, up, down);
    s.name = format!("fcwa_delayed_u{up}_d{down}");
    s
}

pub const DELAYED_CASES: [(u32, u32); 9] = [(5, 5), (10, 5), (15, 5), (5, 10), (10, 10), (15, 10), (5, 15), (10, 15), (15, 15)];

pub fn accf_grid(up: u32, down: u32, per: f64) -> ScenarioSpec {
    let mut s = load(if per > 0.0 { "fig12_accf_grid_per" } else { "fig9_accf_grid" });
    s.sweeps.clear();
    s.per = per;
    set_counts(&mut s, up, down);
    s.name = format!("accf_grid_u{up}_d{down}_per{per}");
    s
}

pub const GRID_UP: [u32; 3] = [3, 5, 10];
pub const GRID_DOWN: [u32; 6] = [5, 10, 15, 20, 25, 30];

pub fn accf_delayed() -> ScenarioSpec {
    load("fig11_accf_delayed")
}

/// `n` stations per direction: half run FTP, the rest rate-limited sources
/// spread evenly over 150..550 kbit/s.
pub fn ftp_telnet(n: u32) -> Result<ScenarioSpec> {
    if n < 2 {
        return Err(invalid("need at least two stations per direction"));
    }
    let ftp = n / 2;
    let paced = n - ftp;
    let mut s = load("fig14_ftp_telnet");
    s.flows.clear();
    for direction in [Direction::Up, Direction::Down] {
        s.flows.push(FlowGroup {
            direction,
            count: ftp,
            ld: Schedule::Arith { first: 0.01, step: 0.002 },
            ..FlowGroup::default()
        });
        for i in 0..paced {
            let rate = if paced == 1 { 350_000 } else { 150_000 + 400_000 * i / (paced - 1) };
            s.flows.push(FlowGroup {
                direction,
                kind: FlowKind::Telnet { rate_bps: f64::from(rate) },
                ld: Schedule::Constant(0.01 + 0.002 * f64::from(ftp + i)),
                ..FlowGroup::default()
            });
        }
    }
    s.name = format!("ftp_telnet_n{n}");
    Ok(s)
}

pub const FTP_TELNET_SIZES: [u32; 5] = [2, 4, 6, 8, 10];

pub fn short_lived() -> ScenarioSpec {
    load("fig16_short_lived")
}

/// `total` flows split evenly between directions, windows cycling through
/// 12, 20, 42 and 84, all with wired delay `ld`.
pub fn mixed_windows(total: u32, ld: f64) -> ScenarioSpec {
    let mut s = load("fig17_mixed_windows");
    set_counts(&mut s, total / 2, total - total / 2);
    for g in &mut s.flows {
        g.ld = Schedule::Constant(ld);
    }
    s.name = format!("mixed_windows_n{total}_ld{ld}");
    s
}

pub const MIXED_TOTALS: [u32; 6] = [4, 8, 12, 16, 20, 24];
pub const MIXED_LDS: [f64; 6] = [0.0, 0.01, 0.02, 0.03, 0.04, 0.05];

/// Largest uniform window for which the steady AP drop ratio stays at or
/// below `threshold`, searched from the analytic floor. Returns the window
/// and every `(window, drop ratio)` probed.
pub fn simulated_limit(base: &ScenarioSpec, threshold: f64, seed: u64) -> Result<(u32, Vec<(u32, f64)>)> {
    let start = uniform_limit(base)?.floor().max(1);
    let mut probed = Vec::new();
    let mut probe = |w: u32| -> Result<f64> {
        let mut s = base.clone();
        set_windows(&mut s, w);
        let r = crate::sim::run(&s, seed)?.steady_ap_drop_ratio();
        probed.push((w, r));
        Ok(r)
    };
    let mut w = start;
    if probe(w)? <= threshold {
        while w < 4 * start + 16 && probe(w + 1)? <= threshold {
            w += 1;
        }
    } else {
        while w > 1 {
            w -= 1;
            if probe(w)? <= threshold {
                break;
            }
        }
    }
    Ok((w, probed))
}
