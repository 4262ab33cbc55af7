// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// http://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or http://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.
//! Scenario files bundled with the library.

use crate::error::{invalid, Result};
use crate::scenario::ScenarioSpec;

macro_rules! bundled {
    ($($name:literal),* $(,)?) => {
        /// `(name, file contents)` for every bundled scenario.
        pub const SCENARIOS: &[(&str, &str)] = &[
            $(($name, include_str!(concat!("../scenarios/", $name, ".scn")))),*
        ];
    };
}

bundled!(
    "fig2_downlink_only",
    "fig3_uplink_only",
    "fig4_up_down",
    "fig5_equal_ld",
    "fig6_fcwa_basic",
    "fig7_fcwa_varying_ld",
    "fig8_fcwa_delayed",
    "fig9_accf_grid",
    "fig11_accf_delayed",
    "fig12_accf_grid_per",
    "fig14_ftp_telnet",
    "fig16_short_lived",
    "fig17_mixed_windows",
);

/// Source text of a bundled scenario. A trailing `.scn` is ignored.
pub fn source(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".scn").unwrap_or(name);
    SCENARIOS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn load(name: &str) -> Result<ScenarioSpec> {
    let text = source(name).ok_or_else(|| invalid(format!("no bundled scenario '{name}'")))?;
    ScenarioSpec::parse(text)
}
