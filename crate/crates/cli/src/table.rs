// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// http://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or http://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.


//! Column tables written as CSV and as gnuplot data, plus plot scripts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

pub struct Table {
    pub columns: Vec<String>,
    rows: Vec<Vec<Option<String>>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Option<String>>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn csv(&self) -> String {
        let mut o = self.columns.join(",");
        o.push('\n');
        for r in &self.rows {
            let cells: Vec<&str> = r.iter().map(|c| c.as_deref().unwrap_or("")).collect();
            o.push_str(&cells.join(","));
            o.push('\n');
        }
        o
    }

    /// Whitespace separated, `?` for missing values.
    pub fn dat(&self) -> String {
        let mut o = format!("# {}\n", self.columns.join(" "));
        for r in &self.rows {
            let cells: Vec<&str> = r.iter().map(|c| c.as_deref().unwrap_or("?")).collect();
            o.push_str(&cells.join(" "));
            o.push('\n');
        }
        o
    }

    /// Write `<stem>.csv` and `<stem>.dat` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        write_file(&dir.join(format!("{stem}.csv")), &self.csv())?;
        write_file(&dir.join(format!("{stem}.dat")), &self.dat())
    }
}

pub fn num(v: f64) -> Option<String> {
    v.is_finite().then(|| format!("{v:.6}"))
}

pub fn text(v: impl ToString) -> Option<String> {
    Some(v.to_string())
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// One plot panel: curves drawn from `<data>.dat` columns.
pub struct Panel<'a> {
    pub title: &'a str,
    pub data: &'a str,
    pub xlabel: &'a str,
    pub ylabel: &'a str,
    pub x: usize,
    /// `(column, legend)`; a column of 0 plots nothing.
    pub curves: Vec<(usize, String)>,
    pub style: &'a str,
}

/// A gnuplot script rendering every panel to `<stem>.png`.
pub fn gnuplot(dir: &Path, stem: &str, panels: &[Panel]) -> Result<()> {
    let mut o = String::new();
    let _ = writeln!(o, "set terminal pngcairo size 900,{} noenhanced", 420 * panels.len());
    let _ = writeln!(o, "set output '{stem}.png'");
    let _ = writeln!(o, "set datafile missing '?'");
    let _ = writeln!(o, "set key outside right");
    let _ = writeln!(o, "set grid");
    if panels.len() > 1 {
        let _ = writeln!(o, "set multiplot layout {},1", panels.len());
    }
    for p in panels {
        let _ = writeln!(o, "set title '{}'", p.title);
        let _ = writeln!(o, "set xlabel '{}'", p.xlabel);
        let _ = writeln!(o, "set ylabel '{}'", p.ylabel);
        let curves: Vec<String> = p
            .curves
            .iter()
            .map(|(c, legend)| format!("'{}.dat' using {}:{} with {} title '{}'", p.data, p.x, c, p.style, legend))
            .collect();
        let _ = writeln!(o, "plot {}", curves.join(", \\\n     "));
    }
    if panels.len() > 1 {
        let _ = writeln!(o, "unset multiplot");
    }
    write_file(&dir.join(format!("{stem}.gp")), &o)
}
