// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// http://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or http://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.


//! Scenario loading, parallel execution and per-run output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use rayon::prelude::*;
use wlanfair_core::metrics::{
    demands_from_kinds, fairness_row, flow_summary_csv, mixed_fairness, series_csv, FairnessReport, FAIRNESS_HEADER,
};
use wlanfair_core::report::RunReport;
use wlanfair_core::scenario::{ScenarioSpec, SweepPoint};
use wlanfair_core::{catalogue, sim, Error};

use crate::table::{gnuplot, num, text, write_file, Panel, Table};
use crate::RunOpts;

/// A file path if one exists, otherwise a bundled scenario name.
pub fn load_scenario(arg: &str) -> Result<ScenarioSpec> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {arg}"))?;
        return ScenarioSpec::parse(&text).with_context(|| format!("in {arg}"));
    }
    if catalogue::source(arg).is_some() {
        return Ok(catalogue::load(arg)?);
    }
    Err(anyhow!("no scenario file or bundled scenario named '{arg}' (see `wlanfair list`)"))
}

/// Apply command-line overrides to a scenario.
pub fn apply(mut spec: ScenarioSpec, opts: &RunOpts) -> Result<ScenarioSpec> {
    if let Some(d) = opts.duration {
        spec.duration = d;
    }
    if let Some(w) = opts.warmup {
        spec.warmup = w;
    }
    for o in &opts.overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| Error::InvalidParameter(format!("--set expects KEY=VALUE, got '{o}'")))?;
        spec.set(k.trim(), v.trim()).map_err(|m| Error::InvalidParameter(format!("--set {o}: {m}")))?;
    }
    if !opts.seeds.is_empty() {
        spec.seeds = opts.seeds.clone();
    }
    Ok(spec)
}

pub fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Error::InvalidParameter("--jobs must be at least 1".into()).into());
        }
        b = b.num_threads(n);
    }
    Ok(b.build()?)
}

/// Run every `(spec, seed)` pair; results come back in input order whatever
/// the scheduling.
pub fn run_all(pool: &rayon::ThreadPool, jobs: &[(ScenarioSpec, u64)]) -> Result<Vec<RunReport>> {
    let out: Vec<wlanfair_core::Result<RunReport>> =
        pool.install(|| jobs.par_iter().map(|(s, seed)| sim::run(s, *seed)).collect());
    out.into_iter()
        .zip(jobs)
        .map(|(r, (s, seed))| r.with_context(|| format!("{} seed {seed}", s.name)))
        .collect()
}

pub fn fairness(r: &RunReport) -> Result<FairnessReport> {
    Ok(mixed_fairness(r, &demands_from_kinds(r), 0.95)?)
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Standard error of the mean; zero for a single sample.
pub fn stderr(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (var / v.len() as f64).sqrt()
}

fn point_label(assigned: &[(String, String)]) -> String {
    assigned
        .iter()
        .map(|(k, v)| format!("{k}-{v}"))
        .collect::<Vec<_>>()
        .join("_")
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect()
}

pub fn render_report(r: &RunReport, fr: &FairnessReport) -> String {
    let mut o = String::new();
    let _ = writeln!(o, "scenario  {}", r.scenario);
    let _ = writeln!(o, "seed      {}", r.seed);
    let _ = writeln!(o, "control   {}", r.control.as_str());
    let _ = writeln!(o, "duration  {} s (steady state from {} s)", r.duration, r.warmup);
    let _ = writeln!(o, "events    {}", r.events);
    let _ = writeln!(o, "AP drops  {} of {} steady arrivals ({:.4}%)", r.ap_queue_drops_steady, r.ap_enqueued_steady + r.ap_queue_drops_steady, 100.0 * r.steady_ap_drop_ratio());
    let _ = writeln!(
        o,
        "total     {:.3} Mbit/s (up {:.3}, down {:.3})",
        r.total_throughput(None) / 1e6,
        r.total_throughput(Some(wlanfair_core::frame::Direction::Up)) / 1e6,
        r.total_throughput(Some(wlanfair_core::frame::Direction::Down)) / 1e6
    );
    match fr.jain_index {
        Some(j) => {
            let _ = writeln!(o, "fairness  {j:.4} over {} saturated flows", fr.saturated_flow_ids.len());
        }
        None => {
            let _ = writeln!(o, "fairness  n/a (no saturated flows)");
        }
    }
    if !fr.nonsaturated_plr.is_empty() {
        let _ = writeln!(o, "plr       mean {:.5}, max {:.5} over rate-limited flows", fr.mean_plr(), fr.max_plr());
    }
    let _ = writeln!(o, "\n flow dir  kind           ld_ms  win  Mbit/s  retx  rto  done_s");
    for (f, x) in r.flows.iter().zip(r.steady_throughputs()) {
        let kind = match f.kind {
            wlanfair_core::scenario::FlowKind::Ftp => "ftp".to_string(),
            wlanfair_core::scenario::FlowKind::Telnet { rate_bps } => format!("telnet {:.0}k", rate_bps / 1e3),
            wlanfair_core::scenario::FlowKind::Short { packets } => format!("short {packets}"),
        };
        let done = f.completion_time.map_or("-".to_string(), |c| format!("{c:.2}"));
        let _ = writeln!(
            o,
            "{:>5} {:<4} {:<14} {:>5.1} {:>4} {:>7.3} {:>5} {:>4} {:>7}",
            f.id.0,
            f.direction.as_str(),
            kind,
            f.ld * 1e3,
            f.window,
            x / 1e6,
            f.sender.retransmissions,
            f.sender.timeouts,
            done
        );
    }
    o
}

fn write_run(dir: &Path, r: &RunReport, fr: &FairnessReport) -> Result<()> {
    write_file(&dir.join("flows.csv"), &flow_summary_csv(r))?;
    write_file(&dir.join("series.csv"), &series_csv(r, 1.0)?)?;
    write_file(&dir.join("fairness.csv"), &format!("{FAIRNESS_HEADER}\n{}\n", fairness_row(r, fr)))?;
    write_file(&dir.join("report.txt"), &render_report(r, fr))
}

/// Per-flow mean throughput over seeds, as bars.
fn write_flow_bars(dir: &Path, reports: &[&RunReport]) -> Result<()> {
    let mut t = Table::new(["flow", "direction", "mean_bps", "stderr_bps"]);
    let first = reports[0];
    let per_seed: Vec<Vec<f64>> = reports.iter().map(|r| r.steady_throughputs()).collect();
    for (i, f) in first.flows.iter().enumerate() {
        let xs: Vec<f64> = per_seed.iter().map(|v| v[i]).collect();
        t.push(vec![text(f.id.0), text(f.direction.as_str()), num(mean(&xs)), num(stderr(&xs))]);
    }
    t.write(dir, "throughput")?;
    gnuplot(
        dir,
        "throughput",
        &[Panel {
            title: &first.scenario,
            data: "throughput",
            xlabel: "flow",
            ylabel: "steady throughput (bit/s)",
            x: 1,
            curves: vec![(3, "mean over seeds".into())],
            style: "boxes",
        }],
    )
}

fn write_sweep(dir: &Path, points: &[SweepPoint], rows: &[Vec<(&RunReport, &FairnessReport)>]) -> Result<()> {
    let keys: Vec<String> = points.first().map(|p| p.0.iter().map(|(k, _)| k.clone()).collect()).unwrap_or_default();
    let mut cols = vec!["point".to_string()];
    cols.extend(keys.iter().cloned());
    cols.extend(
        ["seeds", "jain_mean", "jain_stderr", "total_bps_mean", "total_bps_stderr", "up_bps_mean", "down_bps_mean", "max_plr", "fair_access"]
            .map(String::from),
    );
    let mut t = Table::new(cols);
    for (i, ((assigned, _), runs)) in points.iter().zip(rows).enumerate() {
        let jain: Vec<f64> = runs.iter().filter_map(|(_, f)| f.jain_index).collect();
        let total: Vec<f64> = runs.iter().map(|(r, _)| r.total_throughput(None)).collect();
        let up: Vec<f64> = runs.iter().map(|(r, _)| r.total_throughput(Some(wlanfair_core::frame::Direction::Up))).collect();
        let down: Vec<f64> = runs.iter().map(|(r, _)| r.total_throughput(Some(wlanfair_core::frame::Direction::Down))).collect();
        let max_plr = runs.iter().map(|(_, f)| f.max_plr()).fold(0.0, f64::max);
        let mut row = vec![text(i + 1)];
        row.extend(assigned.iter().map(|(_, v)| text(v)));
        row.extend([
            text(runs.len()),
            num(mean(&jain)),
            num(stderr(&jain)),
            num(mean(&total)),
            num(stderr(&total)),
            num(mean(&up)),
            num(mean(&down)),
            num(max_plr),
            text(runs.iter().all(|(_, f)| f.fair_access)),
        ]);
        t.push(row);
    }
    t.write(dir, "sweep")?;
    let jain_col = keys.len() + 3;
    gnuplot(
        dir,
        "sweep",
        &[
            Panel { title: "fairness", data: "sweep", xlabel: "sweep point", ylabel: "Jain index", x: 1, curves: vec![(jain_col, "saturated flows".into())], style: "linespoints" },
            Panel {
                title: "throughput",
                data: "sweep",
                xlabel: "sweep point",
                ylabel: "bit/s",
                x: 1,
                curves: vec![(jain_col + 2, "total".into()), (jain_col + 4, "up".into()), (jain_col + 5, "down".into())],
                style: "linespoints",
            },
        ],
    )
}

/// `run` writes every run's reports; `sweep` only the aggregate tables.
pub fn run(scenario: &str, opts: &RunOpts, aggregate_only: bool) -> Result<()> {
    let spec = apply(load_scenario(scenario)?, opts)?;
    spec.validate()?;
    let points = spec.sweep_points()?;
    for (assigned, p) in &points {
        p.validate().with_context(|| format!("sweep point {}", point_label(assigned)))?;
    }
    let jobs: Vec<(ScenarioSpec, u64)> =
        points.iter().flat_map(|(_, p)| spec.seeds.iter().map(move |&s| (p.clone(), s))).collect();
    let reports = run_all(&pool(opts.jobs)?, &jobs)?;
    let fairs = reports.iter().map(fairness).collect::<Result<Vec<_>>>()?;

    let dir: PathBuf = opts.out.join(&spec.name);
    let swept = !spec.sweeps.is_empty();
    let mut all = String::new();
    all.push_str(if swept { "point," } else { "" });
    all.push_str(FAIRNESS_HEADER);
    all.push('\n');
    let per_point = spec.seeds.len();
    let mut grouped: Vec<Vec<(&RunReport, &FairnessReport)>> = vec![Vec::new(); points.len()];
    for (i, (r, f)) in reports.iter().zip(&fairs).enumerate() {
        let p = i / per_point;
        let label = point_label(&points[p].0);
        if swept {
            let _ = write!(all, "{label},");
        }
        let _ = writeln!(all, "{}", fairness_row(r, f));
        if !aggregate_only {
            let run_dir = if swept { dir.join(&label) } else { dir.clone() }.join(format!("seed{}", r.seed));
            write_run(&run_dir, r, f)?;
        }
        grouped[p].push((r, f));
        let jain = f.jain_index.map_or("n/a".to_string(), |j| format!("{j:.4}"));
        println!(
            "{}{} seed {}: jain {jain}, total {:.3} Mbit/s",
            r.scenario,
            if swept { format!(" [{label}]") } else { String::new() },
            r.seed,
            r.total_throughput(None) / 1e6
        );
    }
    write_file(&dir.join("fairness.csv"), &all)?;
    if swept || aggregate_only {
        write_sweep(&dir, &points, &grouped)?;
    }
    if !swept && !aggregate_only {
        let rs: Vec<&RunReport> = reports.iter().collect();
        write_flow_bars(&dir, &rs)?;
    }
    println!("wrote {}", dir.display());
    Ok(())
}
