// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// http://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or http://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.


//! Data behind the reference figures, one directory per figure id.

use std::path::PathBuf;

use anyhow::Result;
use rayon::prelude::*;
use wlanfair_core::experiments as ex;
use wlanfair_core::frame::Direction;
use wlanfair_core::report::RunReport;
use wlanfair_core::scenario::{ControlBlock, ScenarioSpec};
use wlanfair_core::{catalogue, Error};

use crate::exec::{self, fairness, mean};
use crate::table::{gnuplot, num, text, Panel, Table};
use crate::RunOpts;

pub const FIGURES: &[&str] = &[
    "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10", "fig11", "fig12", "fig13", "fig9..13", "fig14",
    "fig15", "fig14..15", "fig16", "fig17", "fig18", "fig17..18",
];

struct Ctx<'a> {
    opts: &'a RunOpts,
    pool: rayon::ThreadPool,
    dir: PathBuf,
}

impl Ctx<'_> {
    fn prep(&self, spec: ScenarioSpec) -> Result<ScenarioSpec> {
        let mut s = exec::apply(spec, self.opts)?;
        if self.opts.seeds.is_empty() && s.seeds.is_empty() {
            s.seeds = vec![1];
        }
        s.validate()?;
        Ok(s)
    }

    /// Every spec over its seeds, grouped back per spec.
    fn run(&self, specs: &[ScenarioSpec]) -> Result<Vec<Vec<RunReport>>> {
        let jobs: Vec<(ScenarioSpec, u64)> =
            specs.iter().flat_map(|s| s.seeds.iter().map(move |&seed| (s.clone(), seed))).collect();
        let mut reports = exec::run_all(&self.pool, &jobs)?.into_iter();
        Ok(specs.iter().map(|s| reports.by_ref().take(s.seeds.len()).collect()).collect())
    }

    fn done(&self) {
        println!("wrote {}", self.dir.display());
    }
}

fn controlled(spec: &ScenarioSpec, control: ControlBlock) -> ScenarioSpec {
    ScenarioSpec { control, name: format!("{}_{}", spec.name, control.as_str()), ..spec.clone() }
}

fn total(rs: &[RunReport], d: Option<Direction>) -> f64 {
    mean(&rs.iter().map(|r| r.total_throughput(d)).collect::<Vec<_>>())
}

fn jain(rs: &[RunReport]) -> Result<f64> {
    let v: Vec<f64> = rs.iter().map(|r| Ok(fairness(r)?.jain_index.unwrap_or(f64::NAN))).collect::<Result<_>>()?;
    Ok(mean(&v))
}

fn flow_means(rs: &[RunReport]) -> Vec<f64> {
    let per: Vec<Vec<f64>> = rs.iter().map(|r| r.steady_throughputs()).collect();
    (0..per[0].len()).map(|i| mean(&per.iter().map(|v| v[i]).collect::<Vec<_>>())).collect()
}

pub fn replicate(figure: &str, opts: &RunOpts, loss_threshold: f64) -> Result<()> {
    let id = figure.to_ascii_lowercase();
    if !FIGURES.contains(&id.as_str()) {
        return Err(Error::InvalidParameter(format!("unknown figure '{figure}'; expected one of {}", FIGURES.join(", "))).into());
    }
    if !(loss_threshold > 0.0 && loss_threshold < 1.0) {
        return Err(Error::InvalidParameter(format!("--loss-threshold must be in (0, 1), got {loss_threshold}")).into());
    }
    let cx = Ctx { opts, pool: exec::pool(opts.jobs)?, dir: opts.out.join(id.replace("..", "-")) };
    match id.as_str() {
        "fig2" => flow_bars(&cx, "fig2_downlink_only"),
        "fig3" => flow_bars(&cx, "fig3_uplink_only"),
        "fig4" => flow_bars(&cx, "fig4_up_down"),
        "fig5" => window_limits(&cx, loss_threshold),
        "fig6" => fcwa_gain(&cx),
        "fig7" => varying_ld(&cx),
        "fig8" => delayed(&cx),
        "fig9" | "fig10" => accf_grid(&cx, 0.0),
        "fig11" => staggered(&cx),
        "fig12" | "fig13" => accf_grid(&cx, 0.01),
        "fig9..13" => {
            accf_grid(&cx, 0.0)?;
            staggered(&cx)?;
            accf_grid(&cx, 0.01)
        }
        "fig14" | "fig15" | "fig14..15" => ftp_telnet(&cx),
        "fig16" => short_lived(&cx),
        _ => mixed_windows(&cx),
    }
}

fn flow_bars(cx: &Ctx, name: &str) -> Result<()> {
    let spec = cx.prep(catalogue::load(name)?)?;
    let rs = cx.run(std::slice::from_ref(&spec))?.remove(0);
    let mut t = Table::new(["flow", "direction", "ld_ms", "mean_bps"]);
    for (f, x) in rs[0].flows.iter().zip(flow_means(&rs)) {
        t.push(vec![text(f.id.0), text(f.direction.as_str()), num(f.ld * 1e3), num(x)]);
    }
    t.write(&cx.dir, name)?;
    gnuplot(
        &cx.dir,
        name,
        &[Panel { title: name, data: name, xlabel: "flow", ylabel: "throughput (bit/s)", x: 1, curves: vec![(4, "steady state".into())], style: "boxes" }],
    )?;
    println!(
        "{name}: jain {:.4}, up {:.3} Mbit/s, down {:.3} Mbit/s over {} seeds",
        jain(&rs)?,
        total(&rs, Some(Direction::Up)) / 1e6,
        total(&rs, Some(Direction::Down)) / 1e6,
        rs.len()
    );
    cx.done();
    Ok(())
}

fn window_limits(cx: &Ctx, threshold: f64) -> Result<()> {
    let ns: Vec<u32> = (1..=10).collect();
    let specs = ns.iter().map(|&n| cx.prep(ex::equal_ld(n, 1, 1))).collect::<Result<Vec<_>>>()?;
    let seed = specs[0].seeds[0];
    let sims: Vec<_> =
        cx.pool.install(|| specs.par_iter().map(|s| ex::simulated_limit(s, threshold, seed)).collect());
    let mut t = Table::new(["n_per_direction", "flows", "model_w_lim", "model_floor", "simulated", "baseline"]);
    for ((n, s), sim) in ns.iter().zip(&specs).zip(sims) {
        let w = ex::uniform_limit(s)?;
        let (simulated, probes) = sim?;
        let probes: Vec<String> = probes.iter().map(|(w, r)| format!("{w}:{:.3}%", r * 100.0)).collect();
        println!("n={n}: model {:.2}, simulated {simulated} (probes {})", w.w_lim, probes.join(" "));
        t.push(vec![
            text(n),
            text(2 * n),
            num(w.w_lim),
            text(w.floor()),
            text(simulated),
            num(f64::from(s.bs_ap) / f64::from(2 * n)),
        ]);
    }
    t.write(&cx.dir, "window_limits")?;
    gnuplot(
        &cx.dir,
        "window_limits",
        &[Panel {
            title: "window limit, equal 50 ms delays",
            data: "window_limits",
            xlabel: "flows",
            ylabel: "packets",
            x: 2,
            curves: vec![(3, "model".into()), (5, format!("simulated, drops <= {threshold}")), (6, "BS/(n_up+n_down)".into())],
            style: "linespoints",
        }],
    )?;
    cx.done();
    Ok(())
}

fn fcwa_gain(cx: &Ctx) -> Result<()> {
    let ns: Vec<u32> = (1..=10).collect();
    let mut specs = Vec::new();
    for &n in &ns {
        let s = cx.prep(ex::fcwa_basic(n))?;
        specs.push(cx.prep(ex::baseline(&s))?);
        specs.push(s);
    }
    let rs = cx.run(&specs)?;
    let mut t = Table::new(["n_per_direction", "flows", "fcwa_bps", "baseline_bps", "gain_pct", "fcwa_jain", "baseline_jain"]);
    for (i, n) in ns.iter().enumerate() {
        let (base, fcwa) = (&rs[2 * i], &rs[2 * i + 1]);
        let (tf, tb) = (total(fcwa, None), total(base, None));
        t.push(vec![text(n), text(2 * n), num(tf), num(tb), num(100.0 * (tf / tb - 1.0)), num(jain(fcwa)?), num(jain(base)?)]);
    }
    t.write(&cx.dir, "fcwa_throughput")?;
    gnuplot(
        &cx.dir,
        "fcwa_throughput",
        &[Panel {
            title: "total throughput",
            data: "fcwa_throughput",
            xlabel: "flows",
            ylabel: "bit/s",
            x: 2,
            curves: vec![(3, "FCWA".into()), (4, "BS/(n_up+n_down) windows".into())],
            style: "linespoints",
        }],
    )?;
    cx.done();
    Ok(())
}

fn varying_ld(cx: &Ctx) -> Result<()> {
    let mut specs = Vec::new();
    for n in ex::VARYING_LD_SIZES {
        let s = cx.prep(ex::fcwa_varying_ld(n))?;
        specs.push(cx.prep(ex::baseline(&s))?);
        specs.push(s);
    }
    let rs = cx.run(&specs)?;
    let mut panels = Vec::new();
    let stems: Vec<String> = ex::VARYING_LD_SIZES.iter().map(|n| format!("flows_n{n}")).collect();
    for (i, n) in ex::VARYING_LD_SIZES.iter().enumerate() {
        let (base, fcwa) = (&rs[2 * i], &rs[2 * i + 1]);
        let mut t = Table::new(["flow", "direction", "ld_ms", "fcwa_bps", "baseline_bps"]);
        for ((f, a), b) in fcwa[0].flows.iter().zip(flow_means(fcwa)).zip(flow_means(base)) {
            t.push(vec![text(f.id.0 + 1), text(f.direction.as_str()), num(f.ld * 1e3), num(a), num(b)]);
        }
        t.write(&cx.dir, &stems[i])?;
        println!("n={n}: jain FCWA {:.4}, baseline {:.4}", jain(fcwa)?, jain(base)?);
        panels.push(Panel {
            title: "",
            data: &stems[i],
            xlabel: "connection (uplinks first)",
            ylabel: "bit/s",
            x: 1,
            curves: vec![(4, format!("FCWA, {n}+{n} flows")), (5, "BS/(n_up+n_down) windows".into())],
            style: "linespoints",
        });
    }
    gnuplot(&cx.dir, "varying_ld", &panels)?;
    cx.done();
    Ok(())
}

fn delayed(cx: &Ctx) -> Result<()> {
    let mut specs = Vec::new();
    for (u, d) in ex::DELAYED_CASES {
        let s = cx.prep(ex::fcwa_delayed(u, d))?;
        specs.push(cx.prep(ex::baseline(&s))?);
        specs.push(s);
    }
    let rs = cx.run(&specs)?;
    let mut t = Table::new([
        "case", "n_up", "n_down", "model_w_lim", "baseline_window", "fcwa_bps", "baseline_bps", "gain_pct", "fcwa_jain", "baseline_jain",
    ]);
    for (i, (u, d)) in ex::DELAYED_CASES.iter().enumerate() {
        let (base, fcwa) = (&rs[2 * i], &rs[2 * i + 1]);
        let w = ex::uniform_limit(&specs[2 * i + 1])?;
        let (tf, tb) = (total(fcwa, None), total(base, None));
        t.push(vec![
            text(i + 1),
            text(u),
            text(d),
            num(w.w_lim),
            text(base[0].flows[0].window),
            num(tf),
            num(tb),
            num(100.0 * (tf / tb - 1.0)),
            num(jain(fcwa)?),
            num(jain(base)?),
        ]);
    }
    t.write(&cx.dir, "delayed")?;
    gnuplot(
        &cx.dir,
        "delayed",
        &[
            Panel { title: "window limits, b = 2", data: "delayed", xlabel: "case", ylabel: "packets", x: 1, curves: vec![(4, "model".into()), (5, "BS/(n_up+n_down)".into())], style: "linespoints" },
            Panel { title: "total throughput", data: "delayed", xlabel: "case", ylabel: "bit/s", x: 1, curves: vec![(6, "FCWA".into()), (7, "baseline windows".into())], style: "linespoints" },
        ],
    )?;
    cx.done();
    Ok(())
}

const CONTROLS: [ControlBlock; 3] = [ControlBlock::None, ControlBlock::Fcwa, ControlBlock::Accf];

fn accf_grid(cx: &Ctx, per: f64) -> Result<()> {
    let mut specs = Vec::new();
    for u in ex::GRID_UP {
        for d in ex::GRID_DOWN {
            let s = ex::accf_grid(u, d, per);
            for c in CONTROLS {
                specs.push(cx.prep(controlled(&s, c))?);
            }
        }
    }
    let rs = cx.run(&specs)?;
    let mut cols = vec!["n_up".to_string(), "n_down".to_string()];
    for c in CONTROLS {
        for m in ["jain", "up_bps", "down_bps", "total_bps"] {
            cols.push(format!("{m}_{}", c.as_str()));
        }
    }
    let tag = if per > 0.0 { format!("grid_per{per}") } else { "grid".to_string() };
    let mut stems = Vec::new();
    let mut all = Table::new(cols.clone());
    let mut k = 0;
    for u in ex::GRID_UP {
        let mut t = Table::new(cols.clone());
        for d in ex::GRID_DOWN {
            let mut row = vec![text(u), text(d)];
            for _ in CONTROLS {
                let r = &rs[k];
                k += 1;
                row.extend([num(jain(r)?), num(total(r, Some(Direction::Up))), num(total(r, Some(Direction::Down))), num(total(r, None))]);
            }
            t.push(row.clone());
            all.push(row);
        }
        let stem = format!("{tag}_up{u}");
        t.write(&cx.dir, &stem)?;
        stems.push(stem);
    }
    all.write(&cx.dir, &tag)?;
    let mut panels = Vec::new();
    for (u, stem) in ex::GRID_UP.iter().zip(&stems) {
        panels.push(Panel {
            title: "",
            data: stem,
            xlabel: "downlink flows",
            ylabel: "Jain index",
            x: 2,
            curves: CONTROLS.iter().enumerate().map(|(i, c)| (3 + 4 * i, format!("{}, {u} up", c.as_str()))).collect(),
            style: "linespoints",
        });
    }
    gnuplot(&cx.dir, &format!("{tag}_fairness"), &panels)?;
    for p in &mut panels {
        p.ylabel = "bit/s";
        p.curves = p
            .curves
            .iter()
            .flat_map(|(c, legend)| [(c + 1, format!("{legend} uplink")), (c + 2, format!("{legend} downlink")), (c + 3, format!("{legend} total"))])
            .collect();
    }
    gnuplot(&cx.dir, &format!("{tag}_throughput"), &panels)?;
    cx.done();
    Ok(())
}

fn staggered(cx: &Ctx) -> Result<()> {
    let base = ex::accf_delayed();
    let specs = [cx.prep(controlled(&base, ControlBlock::Accf))?, cx.prep(controlled(&base, ControlBlock::None))?];
    let rs = cx.run(&specs)?;
    let mut panels = Vec::new();
    let stems = ["staggered_accf", "staggered_none"];
    for (r, stem) in rs.iter().zip(stems) {
        let r = &r[0];
        let series = wlanfair_core::metrics::throughput_series(r, 1.0)?;
        let mut cols = vec!["time_s".to_string()];
        cols.extend(r.flows.iter().map(|f| format!("{}{}_bps", f.direction.as_str(), f.id.0)));
        let mut t = Table::new(cols);
        for i in 0..series[0].len() {
            let mut row = vec![num(i as f64)];
            row.extend(series.iter().map(|s| num(s[i] as f64)));
            t.push(row);
        }
        t.write(&cx.dir, stem)?;
        println!("{stem}: jain {:.4}", jain(std::slice::from_ref(r))?);
        panels.push((stem, r.flows.iter().map(|f| format!("{} {}", f.direction.as_str(), f.id.0)).collect::<Vec<_>>()));
    }
    let panels: Vec<Panel> = panels
        .iter()
        .map(|(stem, names)| Panel {
            title: stem,
            data: stem,
            xlabel: "time (s)",
            ylabel: "bit/s",
            x: 1,
            curves: names.iter().enumerate().map(|(i, n)| (i + 2, n.clone())).collect(),
            style: "lines",
        })
        .collect();
    gnuplot(&cx.dir, "staggered", &panels)?;
    cx.done();
    Ok(())
}

fn ftp_telnet(cx: &Ctx) -> Result<()> {
    let controls = [ControlBlock::None, ControlBlock::Accf];
    let mut specs = Vec::new();
    for n in ex::FTP_TELNET_SIZES {
        let s = ex::ftp_telnet(n)?;
        for c in controls {
            specs.push(cx.prep(controlled(&s, c))?);
        }
    }
    let rs = cx.run(&specs)?;
    let mut cols = vec!["stations_per_direction".to_string()];
    for c in controls {
        for m in ["ftp_jain", "telnet_mean_plr", "telnet_max_plr", "total_bps"] {
            cols.push(format!("{m}_{}", c.as_str()));
        }
    }
    let mut t = Table::new(cols);
    for (i, n) in ex::FTP_TELNET_SIZES.iter().enumerate() {
        let mut row = vec![text(n)];
        for j in 0..controls.len() {
            let r = &rs[i * controls.len() + j];
            let frs = r.iter().map(fairness).collect::<Result<Vec<_>>>()?;
            row.extend([
                num(jain(r)?),
                num(mean(&frs.iter().map(|f| f.mean_plr()).collect::<Vec<_>>())),
                num(frs.iter().map(|f| f.max_plr()).fold(0.0, f64::max)),
                num(total(r, None)),
            ]);
        }
        t.push(row);
    }
    t.write(&cx.dir, "ftp_telnet")?;
    gnuplot(
        &cx.dir,
        "ftp_telnet",
        &[
            Panel { title: "FTP fairness and Telnet loss", data: "ftp_telnet", xlabel: "stations per direction", ylabel: "", x: 1, curves: vec![(2, "jain none".into()), (6, "jain accf".into()), (3, "mean PLR none".into()), (7, "mean PLR accf".into())], style: "linespoints" },
            Panel { title: "total throughput", data: "ftp_telnet", xlabel: "stations per direction", ylabel: "bit/s", x: 1, curves: vec![(5, "none".into()), (9, "accf".into())], style: "linespoints" },
        ],
    )?;
    cx.done();
    Ok(())
}

fn short_lived(cx: &Ctx) -> Result<()> {
    let base = ex::short_lived();
    let specs = [cx.prep(controlled(&base, ControlBlock::Accf))?, cx.prep(controlled(&base, ControlBlock::None))?];
    let rs = cx.run(&specs)?;
    let short = |r: &RunReport| -> Vec<(Direction, Option<f64>)> {
        r.flows.iter().filter(|f| matches!(f.kind, wlanfair_core::scenario::FlowKind::Short { .. })).map(|f| (f.direction, f.completion_time)).collect()
    };
    let mut ordered: Vec<Vec<(Direction, Option<f64>)>> = rs.iter().map(|r| short(&r[0])).collect();
    for v in &mut ordered {
        // Uplink transfers first, as numbered in the reference figure.
        v.sort_by_key(|(d, _)| *d != Direction::Up);
    }
    let mut t = Table::new(["index", "direction", "accf_s", "none_s"]);
    for (i, (a, n)) in ordered[0].iter().zip(&ordered[1]).enumerate() {
        t.push(vec![text(i + 1), text(a.0.as_str()), a.1.and_then(num), n.1.and_then(num)]);
    }
    t.write(&cx.dir, "short_lived")?;
    gnuplot(
        &cx.dir,
        "short_lived",
        &[Panel { title: "transfer duration, 31-packet flows (missing: never finished)", data: "short_lived", xlabel: "flow", ylabel: "seconds", x: 1, curves: vec![(3, "accf".into()), (4, "none".into())], style: "impulses lw 4" }],
    )?;
    for (v, name) in ordered.iter().zip(["accf", "none"]) {
        let done: Vec<f64> = v.iter().filter_map(|x| x.1).collect();
        println!("{name}: {}/{} complete, longest {:.2} s", done.len(), v.len(), done.iter().fold(0.0f64, |m, &x| m.max(x)));
    }
    cx.done();
    Ok(())
}

fn mixed_windows(cx: &Ctx) -> Result<()> {
    let controls = [ControlBlock::None, ControlBlock::Accf];
    let mut specs = Vec::new();
    for n in ex::MIXED_TOTALS {
        for ld in ex::MIXED_LDS {
            for c in controls {
                specs.push(cx.prep(controlled(&ex::mixed_windows(n, ld), c))?);
            }
        }
    }
    let rs = cx.run(&specs)?;
    let mut cols = vec!["flows".to_string()];
    for ld in ex::MIXED_LDS {
        for c in controls {
            cols.push(format!("jain_{}_ld{}ms", c.as_str(), ld * 1e3));
            cols.push(format!("total_bps_{}_ld{}ms", c.as_str(), ld * 1e3));
        }
    }
    let mut t = Table::new(cols);
    let mut k = 0;
    for n in ex::MIXED_TOTALS {
        let mut row = vec![text(n)];
        for _ in ex::MIXED_LDS {
            for _ in controls {
                let r = &rs[k];
                k += 1;
                row.extend([num(jain(r)?), num(total(r, None))]);
            }
        }
        t.push(row);
    }
    t.write(&cx.dir, "mixed_windows")?;
    let mut fair = Vec::new();
    let mut thr = Vec::new();
    for (i, ld) in ex::MIXED_LDS.iter().enumerate() {
        for (j, c) in controls.iter().enumerate() {
            let col = 2 + 4 * i + 2 * j;
            fair.push((col, format!("{} {} ms", c.as_str(), ld * 1e3)));
            thr.push((col + 1, format!("{} {} ms", c.as_str(), ld * 1e3)));
        }
    }
    gnuplot(
        &cx.dir,
        "mixed_windows",
        &[
            Panel { title: "fairness, windows 12/20/42/84", data: "mixed_windows", xlabel: "flows", ylabel: "Jain index", x: 1, curves: fair, style: "linespoints" },
            Panel { title: "total throughput", data: "mixed_windows", xlabel: "flows", ylabel: "bit/s", x: 1, curves: thr, style: "linespoints" },
        ],
    )?;
    cx.done();
    Ok(())
}
