//! Frames on data links and messages on the control channel.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::ids::{Dpid, PortNo, PortRef, SwitchId};
use crate::switch_agent::{BfdState, FailoverGroup, FlowRule};

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let raw = String::deserialize(d)?;
        hex::decode(raw).map_err(serde::de::Error::custom)
    }
}

mod opt_hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(b) => s.serialize_some(&hex::encode(b)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|raw| hex::decode(raw).map_err(serde::de::Error::custom))
            .transpose()
    }
}

/// Discovery frame as a structured record rather than 802.1AB wire bytes.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LldpFrame {
    #[serde(with = "hex_bytes")]
    pub chassis_id: Vec<u8>,
    #[serde(with = "hex_bytes")]
    pub port_id: Vec<u8>,
    #[serde(with = "hex_bytes")]
    pub system_description: Vec<u8>,
    #[serde(with = "hex_bytes")]
    pub nonce: Vec<u8>,
    /// Cookie of the window rule that trapped the frame, stamped by the
    /// switch that raised the PACKET_IN.
    #[serde(with = "opt_hex_bytes", default)]
    pub ingress_window_tag: Option<Vec<u8>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    Lldp,
    Data,
}

/// Non-discovery traffic. Only switchover probes are generated by the
/// simulator itself; hosts may emit arbitrary data frames in tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DataFrame {
    pub src: Dpid,
    pub dst: Dpid,
    pub switchover_probe: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "frame", rename_all = "snake_case")]
pub enum Frame {
    Lldp(LldpFrame),
    Data(DataFrame),
}

impl Frame {
    pub fn kind(&self) -> FrameKind {
        match self {
            Frame::Lldp(_) => FrameKind::Lldp,
            Frame::Data(_) => FrameKind::Data,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutPort {
    Port(PortNo),
    /// Replicate on every live port (OFDPv2 style), rewriting the port id.
    AllPorts,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PortStatusEntry {
    pub port: PortNo,
    pub up: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupCommand {
    Add,
    Modify,
    Delete,
}

/// Fast-failover group for traffic towards `dst`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupMod {
    pub command: GroupCommand,
    pub dst: Dpid,
    pub group: FailoverGroup,
}

/// OpenFlow subset exchanged on the control channel, plus `BfdStatus`,
/// which has no OpenFlow encoding and is modeled abstractly.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ControlMessage {
    Hello,
    FeatureRequest,
    FeatureReply { switch: SwitchId, ports: Vec<PortStatusEntry> },
    PacketOut { out: OutPort, frame: LldpFrame },
    PacketIn { in_port: PortNo, frame: LldpFrame },
    PortStatus { port: PortRef, up: bool },
    BfdStatus { port: PortRef, state: BfdState },
    FlowMod { rule: FlowRule },
    GroupMod(GroupMod),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MessageKind {
    Hello,
    FeatureRequest,
    FeatureReply,
    PacketOut,
    PacketIn,
    PortStatus,
    BfdStatus,
    FlowMod,
    GroupMod,
}

impl MessageKind {
    pub const ALL: [MessageKind; 9] = [
        MessageKind::Hello,
        MessageKind::FeatureRequest,
        MessageKind::FeatureReply,
        MessageKind::PacketOut,
        MessageKind::PacketIn,
        MessageKind::PortStatus,
        MessageKind::BfdStatus,
        MessageKind::FlowMod,
        MessageKind::GroupMod,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::Hello => "HELLO",
            MessageKind::FeatureRequest => "FEATURE_REQUEST",
            MessageKind::FeatureReply => "FEATURE_REPLY",
            MessageKind::PacketOut => "PACKET_OUT",
            MessageKind::PacketIn => "PACKET_IN",
            MessageKind::PortStatus => "PORT_STATUS",
            MessageKind::BfdStatus => "BFD_STATUS",
            MessageKind::FlowMod => "FLOW_MOD",
            MessageKind::GroupMod => "GROUP_MOD",
        }
    }

    /// Whether a switch (as opposed to the controller) originates this kind.
    pub fn is_switch_originated(self) -> bool {
        matches!(
            self,
            MessageKind::FeatureReply
                | MessageKind::PacketIn
                | MessageKind::PortStatus
                | MessageKind::BfdStatus
        )
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl ControlMessage {
    pub fn kind(&self) -> MessageKind {
        match self {
            ControlMessage::Hello => MessageKind::Hello,
            ControlMessage::FeatureRequest => MessageKind::FeatureRequest,
            ControlMessage::FeatureReply { .. } => MessageKind::FeatureReply,
            ControlMessage::PacketOut { .. } => MessageKind::PacketOut,
            ControlMessage::PacketIn { .. } => MessageKind::PacketIn,
            ControlMessage::PortStatus { .. } => MessageKind::PortStatus,
            ControlMessage::BfdStatus { .. } => MessageKind::BfdStatus,
            ControlMessage::FlowMod { .. } => MessageKind::FlowMod,
            ControlMessage::GroupMod(_) => MessageKind::GroupMod,
        }
    }
}
