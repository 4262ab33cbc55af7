// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// http://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or http://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.
//! Infrastructure-mode 802.11 DCF simulator carrying bidirectional TCP
//! flows, with an analytic fair congestion-window model and two AP-side
//! control blocks: advertised-window rewriting (FCWA) and uplink ACK
//! congestion control and filtering (ACCF).

// Validation uses `!(x > 0.0)` so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accf;
pub mod analytic;
pub mod catalogue;
pub mod error;
pub mod event;
pub mod experiments;
pub mod fcwa;
pub mod frame;
pub mod mac;
pub mod metrics;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod tcp;
pub mod time;

pub use error::{Error, Result};
pub use time::SimTime;
