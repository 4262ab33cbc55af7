// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// http://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or http://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.


//! Analytic window limits and buffer sizes.

use anyhow::Result;
use clap::Args;
use wlanfair_core::analytic::{buffer_size, w_lim, MacTiming, TrafficMix};
use wlanfair_core::experiments::DELAYED_CASES;
use wlanfair_core::Error;

use crate::table::{num, text, Table};

#[derive(Args)]
pub struct CalcArgs {
    /// Uplink flows.
    #[arg(long, default_value_t = 5)]
    up: u32,
    /// Downlink flows.
    #[arg(long, default_value_t = 5)]
    down: u32,
    /// Data packets per TCP ACK.
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    /// Wired one-way delay in seconds; repeat for several rows.
    #[arg(long = "ld", default_values_t = [0.05])]
    lds: Vec<f64>,
    /// AP buffer size in packets.
    #[arg(long, default_value_t = 100.0)]
    bs: f64,
    /// Also report the AP buffer needed for this window.
    #[arg(long)]
    window: Option<f64>,
    #[arg(long, default_value_t = 1500)]
    data_size: u32,
    #[arg(long, default_value_t = 40)]
    ack_size: u32,
    /// Tabulate the nine delayed-ACK flow mixes (b = 2) instead.
    #[arg(long)]
    delayed_grid: bool,
    /// Print CSV instead of an aligned table.
    #[arg(long)]
    csv: bool,
}

pub fn calc(args: &CalcArgs) -> Result<()> {
    let timing = MacTiming::ieee80211g();
    let mixes: Vec<(u32, u32, f64)> = if args.delayed_grid {
        DELAYED_CASES.iter().map(|&(u, d)| (u, d, 2.0)).collect()
    } else {
        vec![(args.up, args.down, args.b)]
    };
    let mut t = Table::new([
        "n_up", "n_down", "b", "ld_ms", "ct_ap_us", "ct_flow_ms", "wired_term", "buffer_term", "w_lim", "w_floor", "bs_roundtrip",
        "bs_for_window",
    ]);
    for (u, d, b) in mixes {
        let mix = TrafficMix { data_size: args.data_size, ack_size: args.ack_size, ..TrafficMix::new(u, d, b) };
        for &ld in &args.lds {
            let w = w_lim(ld, &mix, args.bs, &timing)?;
            let back = buffer_size(w.w_lim, ld, &mix, &timing)?;
            if (back - args.bs).abs() > 1e-9 {
                return Err(Error::Invariant(format!("buffer size round trip gave {back}, expected {}", args.bs)).into());
            }
            let for_window = match args.window {
                Some(win) => num(buffer_size(win, ld, &mix, &timing)?),
                None => None,
            };
            t.push(vec![
                text(u),
                text(d),
                text(b),
                num(ld * 1e3),
                num(w.ct_ap * 1e6),
                num(w.ct_flow * 1e3),
                num(w.wired_flight_term),
                num(w.buffer_term),
                num(w.w_lim),
                text(w.floor()),
                num(back),
                for_window,
            ]);
        }
    }
    if args.csv {
        print!("{}", t.csv());
    } else {
        print!("{}", aligned(&t));
    }
    Ok(())
}

fn aligned(t: &Table) -> String {
    let csv = t.csv();
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    let widths: Vec<usize> = (0..t.columns.len()).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
    let mut o = String::new();
    for r in rows {
        let cells: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        o.push_str(cells.join("  ").trim_end());
        o.push('\n');
    }
    o
}
