// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// http://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or http://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.
//! Fairness and throughput measures over run reports, and their CSV forms.
//!
//! CSV layouts (header row first, comma separated):
//!
//! * flow summary: `flow,direction,kind,ld_s,window,b,start_s,throughput_bps,
//!   delivered_bytes,ap_drops,sta_drops,retry_drops,mac_enqueued,data_loss_rate,
//!   retransmissions,timeouts,completion_s`
//! * series: `time_s` then one `flow<i>_bps` column per flow, one row per bin
//! * fairness: `scenario,seed,control,flows,saturated,jain_saturated,
//!   mean_plr,max_plr,total_bps,up_bps,down_bps,fair_access`

use std::fmt::Write as _;

use crate::error::{invalid, Result};
use crate::frame::{Direction, FlowId};
use crate::report::RunReport;
use crate::scenario::FlowKind;

/// `(Σx)² / (n Σx²)`.
pub fn jain_index(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(invalid("fairness index of no flows"));
    }
    if x.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(invalid("throughputs must be finite and >= 0"));
    }
    let sum: f64 = x.iter().sum();
    let sq: f64 = x.iter().map(|v| v * v).sum();
    if sq == 0.0 {
        return Err(invalid("fairness index of all-zero throughputs"));
    }
    Ok(sum * sum / (x.len() as f64 * sq))
}

/// Offered load of a flow, as far as fairness is concerned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Demand {
    /// Always has data: judged by throughput equality.
    Saturated,
    /// Finite-rate source: judged by its MAC loss rate.
    Rate(f64),
    /// Fixed-size transfer: judged by completion time only.
    Transfer,
}

pub fn demands_from_kinds(report: &RunReport) -> Vec<Demand> {
    report
        .flows
        .iter()
        .map(|f| match f.kind {
            FlowKind::Ftp => Demand::Saturated,
            FlowKind::Telnet { rate_bps } => Demand::Rate(rate_bps),
            FlowKind::Short { .. } => Demand::Transfer,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FairnessReport {
    /// Jain index over the saturated flows; `None` if there are none or
    /// all of them delivered nothing.
    pub jain_index: Option<f64>,
    pub per_flow_throughput: Vec<f64>,
    pub saturated_flow_ids: Vec<FlowId>,
    pub nonsaturated_plr: Vec<(FlowId, f64)>,
    pub completion_times: Vec<(FlowId, Option<f64>)>,
    /// Jain index at least the threshold and no nonsaturated flow lost anything.
    pub fair_access: bool,
}

impl FairnessReport {
    pub fn max_plr(&self) -> f64 {
        self.nonsaturated_plr.iter().map(|p| p.1).fold(0.0, f64::max)
    }

    pub fn mean_plr(&self) -> f64 {
        if self.nonsaturated_plr.is_empty() {
            0.0
        } else {
            self.nonsaturated_plr.iter().map(|p| p.1).sum::<f64>() / self.nonsaturated_plr.len() as f64
        }
    }
}

/// Fairness over the steady-state window `[warmup, duration)`.
pub fn mixed_fairness(report: &RunReport, demands: &[Demand], threshold: f64) -> Result<FairnessReport> {
    mixed_fairness_window(report, demands, threshold, report.warmup, report.duration)
}

pub fn mixed_fairness_window(
    report: &RunReport,
    demands: &[Demand],
    threshold: f64,
    from: f64,
    to: f64,
) -> Result<FairnessReport> {
    if demands.len() != report.flows.len() {
        return Err(invalid(format!("{} demand labels for {} flows", demands.len(), report.flows.len())));
    }
    let per_flow: Vec<f64> = report.flows.iter().map(|f| f.throughput_bps(report.bin_width, from, to)).collect();
    let mut saturated_ids = Vec::new();
    let mut saturated = Vec::new();
    let mut plr = Vec::new();
    let mut completion = Vec::new();
    for ((f, d), x) in report.flows.iter().zip(demands).zip(&per_flow) {
        match d {
            Demand::Saturated => {
                saturated_ids.push(f.id);
                saturated.push(*x);
            }
            Demand::Rate(_) => plr.push((f.id, f.data_loss_rate())),
            Demand::Transfer => completion.push((f.id, f.completion_time)),
        }
    }
    let jain = if saturated.is_empty() { None } else { jain_index(&saturated).ok() };
    let fair_access = jain.is_none_or(|j| j >= threshold) && plr.iter().all(|p| p.1 == 0.0) && !(saturated.is_empty() && plr.is_empty());
    Ok(FairnessReport {
        jain_index: jain,
        per_flow_throughput: per_flow,
        saturated_flow_ids: saturated_ids,
        nonsaturated_plr: plr,
        completion_times: completion,
        fair_access,
    })
}

/// Delivered bits per `bin` seconds for every flow. `bin` must be a whole
/// multiple of the report's bin width.
pub fn throughput_series(report: &RunReport, bin: f64) -> Result<Vec<Vec<u64>>> {
    if !(bin > 0.0) {
        return Err(invalid(format!("bin must be > 0, got {bin}")));
    }
    let k = (bin / report.bin_width).round();
    if k < 1.0 || (k * report.bin_width - bin).abs() > 1e-9 {
        return Err(invalid(format!("bin {bin} is not a multiple of {}", report.bin_width)));
    }
    let k = k as usize;
    Ok(report.flows.iter().map(|f| f.bins.chunks(k).map(|c| c.iter().sum::<u64>() * 8).collect()).collect())
}

fn kind_label(k: &FlowKind) -> String {
    match k {
        FlowKind::Ftp => "ftp".to_string(),
        FlowKind::Telnet { rate_bps } => format!("telnet_{rate_bps}"),
        FlowKind::Short { packets } => format!("short_{packets}"),
    }
}

pub fn flow_summary_csv(report: &RunReport) -> String {
    let mut o = String::from(
        "flow,direction,kind,ld_s,window,b,start_s,throughput_bps,delivered_bytes,ap_drops,sta_drops,retry_drops,mac_enqueued,data_loss_rate,retransmissions,timeouts,completion_s\n",
    );
    for (f, x) in report.flows.iter().zip(report.steady_throughputs()) {
        let completion = f.completion_time.map_or(String::new(), |c| format!("{c:.6}"));
        let _ = writeln!(
            o,
            "{},{},{},{:.6},{},{},{:.6},{:.1},{},{},{},{},{},{:.6},{},{},{}",
            f.id.0,
            f.direction.as_str(),
            kind_label(&f.kind),
            f.ld,
            f.window,
            f.b,
            f.start,
            x,
            f.delivered_bytes,
            f.ap_drops,
            f.sta_drops,
            f.retry_drops,
            f.mac_enqueued,
            f.data_loss_rate(),
            f.sender.retransmissions,
            f.sender.timeouts,
            completion
        );
    }
    o
}

pub fn series_csv(report: &RunReport, bin: f64) -> Result<String> {
    let series = throughput_series(report, bin)?;
    let mut o = String::from("time_s");
    for f in &report.flows {
        let _ = write!(o, ",flow{}_bps", f.id.0);
    }
    o.push('\n');
    let rows = series.first().map_or(0, Vec::len);
    for r in 0..rows {
        let _ = write!(o, "{:.3}", r as f64 * bin);
        for s in &series {
            let _ = write!(o, ",{:.1}", s[r] as f64 / bin);
        }
        o.push('\n');
    }
    Ok(o)
}

pub const FAIRNESS_HEADER: &str =
    "scenario,seed,control,flows,saturated,jain_saturated,mean_plr,max_plr,total_bps,up_bps,down_bps,fair_access";

/// One data row of the fairness table (no header).
pub fn fairness_row(report: &RunReport, fr: &FairnessReport) -> String {
    let jain = fr.jain_index.map_or(String::new(), |j| format!("{j:.6}"));
    format!(
        "{},{},{},{},{},{},{:.6},{:.6},{:.1},{:.1},{:.1},{}",
        report.scenario,
        report.seed,
        report.control.as_str(),
        report.flows.len(),
        fr.saturated_flow_ids.len(),
        jain,
        fr.mean_plr(),
        fr.max_plr(),
        report.total_throughput(None),
        report.total_throughput(Some(Direction::Up)),
        report.total_throughput(Some(Direction::Down)),
        fr.fair_access
    )
}

pub fn fairness_csv(report: &RunReport, fr: &FairnessReport) -> String {
    format!("{FAIRNESS_HEADER}\n{}\n", fairness_row(report, fr))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jain_examples() {
        assert_eq!(jain_index(&[5.0, 5.0, 5.0]).unwrap(), 1.0);
        assert_eq!(jain_index(&[1.0, 0.0, 0.0, 0.0]).unwrap(), 0.25);
        assert!((jain_index(&[1.0, 2.0, 3.0]).unwrap() - 36.0 / 42.0).abs() < 1e-15);
        assert!(jain_index(&[0.0, 0.0]).is_err());
        assert!(jain_index(&[]).is_err());
        assert!(jain_index(&[1.0, -1.0]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn jain_bounded_and_scale_invariant(
            x in proptest::collection::vec(0.0f64..1e9, 1..40),
            scale in 1e-3f64..1e3,
        ) {
            proptest::prop_assume!(x.iter().any(|&v| v > 0.0));
            let f = jain_index(&x).unwrap();
            let n = x.len() as f64;
            proptest::prop_assert!(f >= 1.0 / n - 1e-12 && f <= 1.0 + 1e-12);
            let scaled: Vec<f64> = x.iter().map(|v| v * scale).collect();
            proptest::prop_assert!((jain_index(&scaled).unwrap() - f).abs() < 1e-12);
        }

        #[test]
        fn jain_permutation_invariant(x in proptest::collection::vec(0.1f64..1e6, 1..40), rot in 0usize..40) {
            let mut y = x.clone();
            y.rotate_left(rot % x.len());
            y.reverse();
            proptest::prop_assert!((jain_index(&x).unwrap() - jain_index(&y).unwrap()).abs() < 1e-12);
        }
    }
}
