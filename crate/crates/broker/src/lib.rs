//! Transport layer: a topic-addressed publish/subscribe broker for
//! canonical records, the length-prefixed frame codec, and an optional
//! loopback TCP ingress speaking that codec.
//!
//! Topics follow `farm/<application>/<job>/<number>`; subscribers may put
//! `*` in the number position. Delivery is at-most-once.

mod broker;
pub mod frame;
pub mod tcp;
mod topic;

pub use broker::{Broker, BrokerStats, Subscription, DEFAULT_CAPACITY};
pub use frame::{frame_decode, frame_encode, read_frame, FrameError, MAX_PAYLOAD};
pub use tcp::{IngressStats, TcpIngress};
pub use topic::{Topic, TopicError};
