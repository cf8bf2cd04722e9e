//! Constellation, pulse family, frame layout and the continuous-time transmit signal.

mod constellation;
mod pulse;
mod signal;

pub use constellation::Constellation;
pub use pulse::{PulseKind, PulseShape};
pub use signal::{effective_pilot_length, Frame, TxSignal};
