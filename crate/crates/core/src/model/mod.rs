//! Domain types shared by the simulator, the switch agent, the controller
//! engines and the adversary: time, identifiers, frames, control messages
//! and scenario configuration.

mod ids;
mod message;
mod scenario;
pub(crate) mod time;

use thiserror::Error;

pub use ids::{Dpid, MacAddr, PortNo, PortRef, SwitchId};
pub use message::{
    ControlMessage, DataFrame, Frame, FrameKind, GroupCommand, GroupMod, LldpFrame, MessageKind,
    OutPort, PortStatusEntry,
};
pub use scenario::{
    canonical, validate_scenario, BfdParams, ChannelSpec, ControllerProfile, Delay, HostSpec,
    LinkSpec, PhysicalTopology, Protocol, ScenarioSpec, SwitchSpec, TimelineEntry, TimelineEvent,
    TopologyDelta, Violation,
};
pub use time::{SimDuration, SimTime};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("malformed duration {0:?}")]
    BadDuration(String),
    #[error("malformed identifier {0:?}")]
    BadIdentifier(String),
    #[error("cannot decode scenario: {0}")]
    Decode(String),
    #[error("cannot encode scenario: {0}")]
    Encode(String),
}
