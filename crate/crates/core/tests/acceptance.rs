// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// http://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or http://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.

//! End-to-end acceptance checks. Prints one line per criterion.
//!
//! `cargo test -p wlanfair-core --test acceptance [-- N ...]` runs all
//! criteria or only the listed numbers. Failures are reported but only turn
//! into a nonzero exit status when `WLANFAIR_ACCEPTANCE_STRICT=1`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wlanfair_core::accf::{Accf, AccfAction, AccfParams, Branch};
use wlanfair_core::analytic::{
    buffer_size, cycle_time_pair, packet_type_probs, w_lim, MacTiming, TrafficMix,
};
use wlanfair_core::experiments as ex;
use wlanfair_core::frame::{Direction, FlowId, Frame, FrameKind, TcpFlags};
use wlanfair_core::mac::{measure_cycle_time, run_saturated, SaturationStop};
use wlanfair_core::metrics::{
    demands_from_kinds, fairness_csv, flow_summary_csv, jain_index, mixed_fairness, series_csv,
};
use wlanfair_core::report::RunReport;
use wlanfair_core::scenario::{ControlBlock, ScenarioSpec};
use wlanfair_core::{catalogue, sim, SimTime};

type Check = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Check);

fn verdict(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn run(spec: &ScenarioSpec, seed: u64) -> RunReport {
    sim::run(spec, seed).unwrap_or_else(|e| panic!("{}: {e}", spec.name))
}

fn with_control(spec: &ScenarioSpec, control: ControlBlock) -> ScenarioSpec {
    ScenarioSpec { control, ..spec.clone() }
}

fn jain_of(r: &RunReport) -> f64 {
    mixed_fairness(r, &demands_from_kinds(r), 0.0).unwrap().jain_index.unwrap_or(0.0)
}

fn c1_analytic_exactness() -> Check {
    let timing = MacTiming::ieee80211g();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cases = 2000;
    let mut worst_rt = 0.0f64;
    for i in 0..cases {
        let n_up = rng.random_range(0..=30u32);
        let n_down = rng.random_range(u32::from(n_up == 0)..=30);
        let b = if rng.random_bool(0.5) { f64::from(rng.random_range(1..=3u32)) } else { rng.random_range(1.0..4.0) };
        let bs = f64::from(rng.random_range(1..=500u32));
        let ld = rng.random_range(0.0..0.2);
        let mix = TrafficMix::new(n_up, n_down, b);
        let at_zero = w_lim(0.0, &mix, bs, &timing).map_err(|e| e.to_string())?;
        let want = bs / (f64::from(n_up) / b + f64::from(n_down));
        if at_zero.w_lim != want {
            return Err(format!("case {i}: w_lim(ld=0) = {} but BS/(n_up/b+n_down) = {want}", at_zero.w_lim));
        }
        let w = w_lim(ld, &mix, bs, &timing).map_err(|e| e.to_string())?.w_lim;
        let back = buffer_size(w, ld, &mix, &timing).map_err(|e| e.to_string())?;
        worst_rt = worst_rt.max((back - bs).abs());
    }
    verdict(worst_rt <= 1e-9, format!("{cases} random tuples, ld=0 exact, worst round-trip error {worst_rt:.1e}"))
}

fn c2_probabilities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let n_up = rng.random_range(0..=40u32);
        let n_down = rng.random_range(u32::from(n_up == 0)..=40);
        let p = packet_type_probs(&TrafficMix::new(n_up, n_down, rng.random_range(1.0..5.0))).unwrap();
        if (p.ap_data + p.ap_ack - 1.0).abs() > 1e-12 || (p.sta_data + p.sta_ack - 1.0).abs() > 1e-12 {
            return Err(format!("closure fails for n_up={n_up} n_down={n_down}: {p:?}"));
        }
    }
    let cases = [((0, 5, 1.0), [1.0, 0.0, 0.0, 1.0]), ((5, 5, 1.0), [0.5; 4]), ((10, 5, 2.0), [0.5, 0.5, 0.8, 0.2])];
    for ((u, d, b), want) in cases {
        let p = packet_type_probs(&TrafficMix::new(u, d, b)).unwrap();
        if [p.ap_data, p.ap_ack, p.sta_data, p.sta_ack] != want {
            return Err(format!("({u}, {d}, b={b}) gave {p:?}, want {want:?}"));
        }
    }
    Ok("closure over 1000 random mixes; (0,5,1), (5,5,1), (10,5,2) exact".into())
}

fn c3_cycle_time_oracle() -> Check {
    let timing = MacTiming::ieee80211g();
    let mut parts = Vec::new();
    let mut ok = true;
    for (p1, p2) in [(1500, 1500), (1500, 40), (40, 1500), (40, 40)] {
        let analytic = cycle_time_pair(p1, p2, &timing).unwrap();
        let measured = measure_cycle_time(p1, p2, timing, 100_000, 3).unwrap().mean;
        let err = (analytic - measured).abs() / measured;
        ok &= err < 0.10;
        parts.push(format!("({p1},{p2}) {:.1}us vs {:.1}us {:.2}%", analytic * 1e6, measured * 1e6, err * 100.0));
    }
    verdict(ok, parts.join("; "))
}

fn c4_saturation_share() -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    for n in [5usize, 10] {
        let sizes = vec![1500; n + 1];
        let r = run_saturated(&sizes, MacTiming::ieee80211g(), 0.0, SaturationStop::TotalSuccesses(10_000_000), 4).unwrap();
        let total = r.total_successes() as f64;
        let fair = 1.0 / (n + 1) as f64;
        let worst = r.successes.iter().map(|&s| ((s as f64 / total) - fair).abs() / fair).fold(0.0, f64::max);
        ok &= worst <= 0.02;
        parts.push(format!("N={n}: {} successes, worst deviation {:.2}%", total, worst * 100.0));
    }
    verdict(ok, parts.join("; "))
}

fn c5_unfairness() -> Check {
    let down = catalogue::load("fig2_downlink_only").unwrap();
    let up = catalogue::load("fig3_uplink_only").unwrap();
    let mix = catalogue::load("fig4_up_down").unwrap();
    let (mut a, mut b, mut c) = (0, 0, 0);
    let mut parts = Vec::new();
    for seed in 1..=3 {
        let ra = run(&down, seed);
        let fa = jain_of(&ra);
        a += usize::from(fa > 0.99);

        let rb = run(&up, seed);
        let th = rb.steady_throughputs();
        let fair = th.iter().sum::<f64>() / th.len() as f64;
        let starving = th.iter().filter(|&&x| x < 0.1 * fair).count();
        let fb = jain_index(&th).unwrap();
        b += usize::from(fb < 0.8 && starving >= 3);

        let rc = run(&mix, seed);
        let up_total = rc.total_throughput(Some(Direction::Up));
        let down_total = rc.total_throughput(Some(Direction::Down));
        let ratio = (up_total / 2.0) / (down_total / 10.0);
        c += usize::from(up_total > down_total && ratio >= 3.0);
        parts.push(format!(
            "seed {seed}: down f={fa:.4}; up f={fb:.3}, {starving} starving; up/down {:.2}/{:.2} Mbps, per-flow x{ratio:.1}",
            up_total / 1e6,
            down_total / 1e6
        ));
    }
    let ok = a >= 2 && b >= 2 && c >= 2;
    verdict(ok, format!("majorities {a}/3, {b}/3, {c}/3 | {}", parts.join(" | ")))
}

fn c6_wlim_boundary() -> Check {
    let mut parts = Vec::new();
    let (mut below_ok, mut above_ok) = (0, 0);
    for b in [1, 2] {
        for n in [3, 5, 8] {
            let floor = ex::uniform_limit(&ex::equal_ld(n, b, 1)).unwrap().floor();
            let at = run(&ex::equal_ld(n, b, floor), 1).steady_ap_drop_ratio();
            let over = run(&ex::equal_ld(n, b, floor + 1), 1).steady_ap_drop_ratio();
            below_ok += usize::from(at < 0.01);
            above_ok += usize::from(over > 0.01);
            parts.push(format!("b={b} n={n} W={floor}: {:.3}% / {:.3}%", at * 100.0, over * 100.0));
        }
    }
    verdict(
        below_ok == 6 && above_ok == 6,
        format!("floor <1% in {below_ok}/6, floor+1 >1% in {above_ok}/6 | {}", parts.join("; ")),
    )
}

fn c7_fcwa() -> Check {
    let mut parts = Vec::new();
    let mut fair_ok = true;
    let mut gain_ok = true;
    let mut compare = |name: String, spec: ScenarioSpec| {
        let r = run(&spec, 1);
        let base = run(&ex::baseline(&spec), 1);
        let f = jain_of(&r);
        let gain = r.total_throughput(None) / base.total_throughput(None) - 1.0;
        fair_ok &= f > 0.99;
        gain_ok &= gain > 0.10;
        parts.push(format!("{name} f={f:.4} gain={:+.0}%", gain * 100.0));
    };
    for (u, d) in ex::DELAYED_CASES {
        compare(format!("b2 u{u}/d{d}"), ex::fcwa_delayed(u, d));
    }
    for n in ex::VARYING_LD_SIZES {
        compare(format!("ld-var n{n}"), ex::fcwa_varying_ld(n));
    }
    verdict(fair_ok && gain_ok, format!("fairness {fair_ok}, gain {gain_ok} | {}", parts.join("; ")))
}

fn c8_accf() -> Check {
    let mut failures = Vec::new();
    let mut cells = 0;
    let mut worst_f = 1.0f64;
    let mut worst_dev = 0.0f64;
    for per in [0.0, 0.01] {
        for u in ex::GRID_UP {
            for d in ex::GRID_DOWN {
                let spec = ex::accf_grid(u, d, per);
                let a = run(&spec, 1);
                let n = run(&with_control(&spec, ControlBlock::None), 1);
                let f = jain_of(&a);
                let dev = (a.total_throughput(None) - n.total_throughput(None)).abs() / n.total_throughput(None);
                worst_f = worst_f.min(f);
                worst_dev = worst_dev.max(dev);
                cells += 1;
                if f <= 0.95 || dev > 0.15 {
                    failures.push(format!("per={per} u{u}/d{d} f={f:.3} dev={:.1}%", dev * 100.0));
                }
            }
        }
    }
    let mut worst_plr = 0.0f64;
    for n in ex::FTP_TELNET_SIZES {
        let r = run(&ex::ftp_telnet(n).unwrap(), 1);
        let fr = mixed_fairness(&r, &demands_from_kinds(&r), 0.95).unwrap();
        let f = fr.jain_index.unwrap_or(0.0);
        worst_plr = worst_plr.max(fr.max_plr());
        if f <= 0.95 || fr.max_plr() > 0.0 {
            failures.push(format!("ftp/telnet n{n} f={f:.3} max PLR={:.4}", fr.max_plr()));
        }
    }
    verdict(
        failures.is_empty(),
        format!(
            "{cells} grid cells + {} mixed runs; worst grid f={worst_f:.3}, worst total deviation {:.1}%, worst PLR {worst_plr:.4}; failing: [{}]",
            ex::FTP_TELNET_SIZES.len(),
            worst_dev * 100.0,
            failures.join(", ")
        ),
    )
}

fn c9_delayed_ack() -> Check {
    let spec = ex::accf_delayed();
    let a = run(&spec, 1);
    let th = a.steady_throughputs();
    let (lo, hi) = th.iter().fold((f64::MAX, 0.0f64), |(l, h), &x| (l.min(x), h.max(x)));
    let n = run(&with_control(&spec, ControlBlock::None), 1);
    let nt = n.steady_throughputs();
    let fair = nt.iter().sum::<f64>() / nt.len() as f64;
    let worst_down = n
        .flows
        .iter()
        .zip(&nt)
        .filter(|(f, _)| f.direction == Direction::Down)
        .map(|(_, &x)| x)
        .fold(f64::MAX, f64::min);
    verdict(
        hi <= 2.0 * lo && worst_down < 0.05 * fair,
        format!(
            "ACCF max/min {:.2}; NONE weakest downlink {:.1}% of fair share",
            hi / lo,
            100.0 * worst_down / fair
        ),
    )
}

fn c10_short_flows() -> Check {
    let spec = ex::short_lived();
    let times = |r: &RunReport| -> Vec<Option<f64>> {
        r.flows.iter().filter(|f| !f.kind.is_saturated() && matches!(f.kind, wlanfair_core::scenario::FlowKind::Short { .. })).map(|f| f.completion_time).collect()
    };
    let a = times(&run(&spec, 1));
    let n = times(&run(&with_control(&spec, ControlBlock::None), 1));
    let a_done = a.iter().flatten().count();
    let a_max = a.iter().flatten().fold(0.0f64, |m, &x| m.max(x));
    let n_done = n.iter().flatten().count();
    let n_max = n.iter().flatten().fold(0.0f64, |m, &x| m.max(x));
    let ok = a.len() == 30 && a_done == 30 && (n_done < n.len() || a_max < 0.5 * n_max);
    verdict(
        ok,
        format!("ACCF {a_done}/{} done, max {a_max:.2} s; NONE {n_done}/{} done, max {n_max:.2} s", a.len(), n.len()),
    )
}

fn ack(flow: u32, no: u64, flags: TcpFlags) -> Frame {
    Frame {
        flow: FlowId(flow),
        direction: Direction::Up,
        kind: FrameKind::TcpAck,
        size: 40,
        seq: 0,
        ack_no: no,
        advertised_window: 42,
        flags,
        ts_val: SimTime::ZERO,
        ts_ecr: None,
        enqueue_time: SimTime::ZERO,
    }
}

fn c11_accf_semantics() -> Check {
    use wlanfair_core::accf::{buffering_delay, cutoff_mean, gamma};
    let p = AccfParams::default();
    let (d, br) = buffering_delay(&p, 5, 0.010, Some(0.020), None);
    if gamma(5, &p) != 0.5 || br != Branch::Buffer || (d.unwrap() - 0.040).abs() > 1e-15 {
        return Err(format!("buffer example gave {d:?} {br:?}"));
    }
    let (d, br) = buffering_delay(&p, 12, 0.500, Some(0.010), Some(0.005));
    if br != Branch::BurstBuffer || (d.unwrap() - 0.010).abs() > 1e-15 {
        return Err(format!("burst example gave {d:?} {br:?}"));
    }
    let mut a = Accf::new(p).unwrap();
    let dup = TcpFlags { dup_ack: true, ..TcpFlags::NONE };
    if !matches!(a.on_ack_arrival(ack(1, 3, dup), SimTime::ZERO), AccfAction::Bypass(_)) {
        return Err("duplicate ACK was not bypassed".into());
    }
    let m = cutoff_mean(&[0.010, 0.011, 0.040], 1.5).unwrap();
    if (m - 0.0105).abs() > 1e-15 {
        return Err(format!("cutoff mean {m}"));
    }

    // Randomized trace: downlink data, plain and flagged uplink ACKs, and
    // timer expiries in deadline order.
    let flows = 8u32;
    let mut a = Accf::new(p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut now = SimTime::ZERO;
    let mut next_ack = vec![1u64; flows as usize + 1];
    let mut released = vec![0u64; flows as usize + 1];
    let mut events = 0u64;
    let release = |flow: u32, no: u64, released: &mut Vec<u64>| -> Result<(), String> {
        if no < released[flow as usize] {
            return Err(format!("flow {flow} released {no} after {}", released[flow as usize]));
        }
        released[flow as usize] = no;
        Ok(())
    };
    while events < 1_000_000 {
        now = now + SimTime::from_secs_f64(rng.random_range(0.0..0.004));
        // Fire due timers first.
        loop {
            let due = (1..=flows)
                .filter_map(|f| a.timer_deadline(FlowId(f)).map(|d| (d, f)))
                .filter(|(d, _)| *d <= now)
                .min();
            let Some((at, f)) = due else { break };
            let frame = a.on_timer_expire(FlowId(f), at).ok_or("expiry with an empty slot")?;
            release(f, frame.ack_no, &mut released)?;
            events += 1;
        }
        let roll = rng.random_range(0..100);
        if roll < 40 {
            let mut d = ack(0, 0, TcpFlags::NONE);
            d.direction = Direction::Down;
            d.kind = FrameKind::TcpData;
            a.update_rates(&d, now);
        } else {
            let f = rng.random_range(1..=flows);
            let flagged = roll >= 95;
            if !flagged {
                next_ack[f as usize] += rng.random_range(1..4);
            }
            let frame = ack(f, next_ack[f as usize], if flagged { dup } else { TcpFlags::NONE });
            a.update_rates(&frame, now);
            match a.on_ack_arrival(frame, now) {
                AccfAction::Bypass(fr) => {
                    if !flagged {
                        return Err("unflagged ACK bypassed".into());
                    }
                    release(f, fr.ack_no, &mut released)?;
                }
                AccfAction::ReleaseNow(fr) => {
                    if flagged {
                        return Err("flagged ACK was not bypassed".into());
                    }
                    release(f, fr.ack_no, &mut released)?;
                }
                AccfAction::BufferUntil(at) => {
                    if flagged {
                        return Err("flagged ACK was buffered".into());
                    }
                    if at < now {
                        return Err("deadline in the past".into());
                    }
                }
            }
        }
        events += 1;
        for f in 1..=flows {
            let buffered = a.buffered(FlowId(f));
            if buffered.is_some() != a.timer_deadline(FlowId(f)).is_some() {
                return Err(format!("flow {f}: slot and timer disagree"));
            }
            if buffered.is_some_and(|b| b.flow != FlowId(f)) {
                return Err(format!("flow {f}: slot holds another flow's ACK"));
            }
        }
        if a.buffered_count() > flows as usize {
            return Err("more buffered ACKs than flows".into());
        }
    }
    Ok(format!("branch and cutoff examples exact; {events} trace events, {} bypasses, {} replacements", a.stats.bypassed, a.stats.replaced))
}

fn c12_determinism() -> Check {
    let mut parts = Vec::new();
    for spec in [catalogue::load("fig4_up_down").unwrap(), ex::short_lived()] {
        let render = |r: &RunReport| {
            let fr = mixed_fairness(r, &demands_from_kinds(r), 0.95).unwrap();
            format!("{}{}{}", flow_summary_csv(r), series_csv(r, 1.0).unwrap(), fairness_csv(r, &fr))
        };
        let a = render(&run(&spec, 7));
        let b = render(&run(&spec, 7));
        if a != b {
            return Err(format!("{}: outputs differ between identical runs", spec.name));
        }
        parts.push(format!("{} ({} bytes)", spec.name, a.len()));
    }
    Ok(format!("identical CSV output for {}", parts.join(", ")))
}

fn main() {
    let criteria: [Criterion; 12] = [
        (1, "analytic exactness", c1_analytic_exactness),
        (2, "probability closure", c2_probabilities),
        (3, "cycle-time oracle", c3_cycle_time_oracle),
        (4, "saturation share", c4_saturation_share),
        (5, "unfairness reproduction", c5_unfairness),
        (6, "window-limit boundary", c6_wlim_boundary),
        (7, "FCWA fairness and efficiency", c7_fcwa),
        (8, "ACCF fairness", c8_accf),
        (9, "ACCF with delayed ACKs", c9_delayed_ack),
        (10, "short-term fairness", c10_short_flows),
        (11, "ACCF unit semantics", c11_accf_semantics),
        (12, "determinism", c12_determinism),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let start = Instant::now();
    let mut passed = 0;
    let mut ran = 0;
    for (id, name, check) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let result = check();
        ran += 1;
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(detail) => {
                passed += 1;
                println!("criterion {id:>2} PASS {name} ({secs:.1} s): {detail}");
            }
            Err(detail) => println!("criterion {id:>2} FAIL {name} ({secs:.1} s): {detail}"),
        }
    }
    println!("acceptance: {passed}/{ran} criteria passed in {:.0} s", start.elapsed().as_secs_f64());
    if passed < ran && std::env::var("WLANFAIR_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
