// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// http://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or http://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.


use wlanfair_core::analytic::{cycle_time_pair, MacTiming};
use wlanfair_core::metrics::{flow_summary_csv, series_csv, throughput_series};
use wlanfair_core::report::RunReport;
use wlanfair_core::scenario::{ControlBlock, ScenarioSpec};
use wlanfair_core::sim::{self, Simulator};
use wlanfair_core::{catalogue, experiments as ex};

fn spec(text: &str) -> ScenarioSpec {
    ScenarioSpec::parse(text).unwrap()
}

fn fingerprint(r: &RunReport) -> String {
    format!("{}{}{:?}", flow_summary_csv(r), series_csv(r, 2.0).unwrap(), r.node_stats)
}

const MIXED: &str = "
name = mixed
duration = 40
warmup = 10
flow {
  direction = down
  count = 3
  ld = arith(0.01, 0.005)
}
flow {
  direction = up
  count = 2
  ld = 0.02
}
";

#[test]
fn same_seed_same_report() {
    let s = spec(MIXED);
    assert_eq!(fingerprint(&sim::run(&s, 9).unwrap()), fingerprint(&sim::run(&s, 9).unwrap()));
    assert_ne!(fingerprint(&sim::run(&s, 9).unwrap()), fingerprint(&sim::run(&s, 10).unwrap()));
}

#[test]
fn none_attachment_is_a_no_op() {
    let s = spec(MIXED);
    let plain = Simulator::bare(&s, 3).unwrap().run().unwrap();
    let mut sim = Simulator::bare(&s, 3).unwrap();
    sim.attach_control_block(ControlBlock::None).unwrap();
    assert!(sim.attach_control_block(ControlBlock::Accf).is_err());
    assert_eq!(fingerprint(&plain), fingerprint(&sim.run().unwrap()));
}

#[test]
fn accf_without_uplink_flows_changes_nothing() {
    let mut s = spec(MIXED);
    s.flows.retain(|g| g.direction == wlanfair_core::frame::Direction::Down);
    let none = sim::run(&s, 5).unwrap();
    s.control = ControlBlock::Accf;
    let accf = sim::run(&s, 5).unwrap();
    assert_eq!(flow_summary_csv(&none), flow_summary_csv(&accf));
    assert_eq!(series_csv(&none, 1.0).unwrap(), series_csv(&accf, 1.0).unwrap());
}

#[test]
fn binned_series_sums_to_delivered_bytes() {
    let r = sim::run(&spec(MIXED), 2).unwrap();
    for k in [1usize, 3, 10, 7] {
        let series = throughput_series(&r, r.bin_width * k as f64).unwrap();
        for (f, bins) in r.flows.iter().zip(&series) {
            assert_eq!(bins.iter().sum::<u64>(), f.delivered_bytes * 8);
        }
    }
    assert!(throughput_series(&r, r.bin_width * 1.5).is_err());
}

#[test]
fn window_limited_flow_runs_at_window_over_rtt() {
    let timing = MacTiming::ieee80211g();
    let r = sim::run(&spec("duration = 60\nwarmup = 10\nflow {\n  direction = down\n  ld = 0.05\n  window = 5\n}\n"), 1).unwrap();
    // Wired round trip plus one data and one ACK exchange with mean backoff.
    let backoff = f64::from(timing.cw_min) / 2.0 * timing.slot_time;
    let rtt = 0.1 + timing.frame_airtime(1500) + timing.frame_airtime(40) + 2.0 * backoff;
    let want = 5.0 * 1500.0 * 8.0 / rtt;
    let got = r.total_throughput(None);
    assert!((got - want).abs() / want < 0.05, "{got} vs {want}");
}

#[test]
fn unconstrained_flow_fills_the_channel() {
    let timing = MacTiming::ieee80211g();
    let r = sim::run(&spec("duration = 60\nwarmup = 10\nflow {\n  direction = down\n  ld = 0.001\n  window = 42\n}\n"), 1).unwrap();
    // AP data and station ACK alternate, one delivered packet per cycle.
    let want = 1500.0 * 8.0 / cycle_time_pair(1500, 40, &timing).unwrap();
    let got = r.total_throughput(None);
    assert!((got - want).abs() / want < 0.05, "{got} vs {want}");
}

#[test]
fn lossy_channel_loses_only_to_retries_and_queues() {
    let mut s = spec(MIXED);
    s.per = 0.05;
    let r = sim::run(&s, 4).unwrap();
    let errors: u64 = r.node_stats.iter().map(|n| n.channel_errors).sum();
    assert!(errors > 0);
    let flow_losses: u64 = r.flows.iter().map(|f| f.ap_drops + f.sta_drops + f.retry_drops).sum();
    let mac_losses: u64 = r.node_stats.iter().map(|n| n.queue_drops + n.retry_drops).sum();
    assert_eq!(flow_losses, mac_losses);
    assert!(r.flows.iter().all(|f| f.delivered_packets > 0));
}

#[test]
fn fcwa_keeps_ap_drops_below_one_percent() {
    let r = sim::run(&ex::fcwa_basic(3), 1).unwrap();
    assert!(r.steady_ap_drop_ratio() < 0.01, "{}", r.steady_ap_drop_ratio());
    assert!(!r.window_log.is_empty());
}

#[test]
fn bundled_scenarios_run_briefly() {
    for (name, _) in catalogue::SCENARIOS {
        let mut s = catalogue::load(name).unwrap();
        // Keep staggered starts inside the shortened run.
        for g in &mut s.flows {
            g.start = wlanfair_core::scenario::Schedule::Constant(0.0);
        }
        s.duration = 30.0;
        s.warmup = 5.0;
        sim::run(&s, 1).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}
