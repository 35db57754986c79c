//! The three perishable inventory models.
//!
//! State components are ordered freshest first and every component is a unit
//! count. Each scenario implements [`crate::mdp::MdpModel`] for value
//! iteration and [`crate::sim::Simulator`] for policy evaluation, sharing one
//! transition rule between the two.

pub mod a;
pub mod b;
pub mod c;

use serde::{Deserialize, Serialize};

/// Order in which units leave stock when demand is filled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Issuing {
    Fifo,
    Lifo,
}

/// `max(x, 0)` on signed integers.
#[inline]
pub(crate) fn pos(x: i64) -> i64 {
    x.max(0)
}
