//! Virtual IEC 61850 process-bus testbed: SV/GOOSE codec, a deterministic
//! discrete-event bus, feeder model, substation devices, attacker, NIDS and
//! trip-latency analysis.

pub mod attacker;
pub mod bus;
pub mod capture;
pub mod codec;
pub mod devices;
pub mod events;
pub mod nids;
pub mod power;
pub mod scenario;
pub mod timing;
