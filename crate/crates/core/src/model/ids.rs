//! Switch, port and address identifiers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ModelError;

/// OpenFlow datapath identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Dpid(pub u64);

/// 48-bit Ethernet address.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MacAddr(pub [u8; 6]);

/// Switch port number. Port 0 is reserved for the internal port and never
/// appears in topology data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PortNo(pub u16);

/// A switch port, written `s<dpid>.p<port>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PortRef {
    pub dpid: Dpid,
    pub port: PortNo,
}

/// Identity a switch presents to the controller.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SwitchId {
    pub dpid: Dpid,
    pub local_mac: MacAddr,
}

impl Dpid {
    /// The datapath id a switch derives from its internal-port MAC.
    pub fn from_mac(mac: MacAddr) -> Dpid {
        let mut buf = [0u8; 8];
        buf[2..].copy_from_slice(&mac.0);
        Dpid(u64::from_be_bytes(buf))
    }

    /// Low 48 bits, used as the default internal-port MAC.
    pub fn default_mac(self) -> MacAddr {
        let b = self.0.to_be_bytes();
        MacAddr([b[2], b[3], b[4], b[5], b[6], b[7]])
    }

    pub fn port(self, port: u16) -> PortRef {
        PortRef { dpid: self, port: PortNo(port) }
    }
}

impl SwitchId {
    pub fn new(dpid: Dpid) -> Self {
        SwitchId { dpid, local_mac: dpid.default_mac() }
    }
}

impl PortRef {
    pub fn new(dpid: u64, port: u16) -> Self {
        PortRef { dpid: Dpid(dpid), port: PortNo(port) }
    }
}

impl fmt::Display for Dpid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

impl fmt::Display for PortNo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

impl fmt::Display for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.dpid, self.port)
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0;
        write!(f, "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}", b[0], b[1], b[2], b[3], b[4], b[5])
    }
}

impl FromStr for MacAddr {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::BadIdentifier(s.to_string());
        let mut out = [0u8; 6];
        let mut parts = s.split(':');
        for byte in out.iter_mut() {
            let part = parts.next().ok_or_else(bad)?;
            *byte = u8::from_str_radix(part, 16).map_err(|_| bad())?;
        }
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(MacAddr(out))
    }
}

impl FromStr for PortRef {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::BadIdentifier(s.to_string());
        let (sw, port) = s.split_once('.').ok_or_else(bad)?;
        let dpid = sw.strip_prefix('s').ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let port: u16 = port.strip_prefix('p').ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if port == 0 {
            return Err(bad());
        }
        Ok(PortRef::new(dpid, port))
    }
}

super::time::string_serde!(MacAddr);
super::time::string_serde!(PortRef);

// TOML integers are signed 64-bit, so datapath ids above i64::MAX are written
// as hex strings.
impl Serialize for Dpid {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(self.0) {
            Ok(v) => s.serialize_i64(v),
            Err(_) => s.collect_str(&format_args!("{:#x}", self.0)),
        }
    }
}

impl<'de> Deserialize<'de> for Dpid {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(v) => Ok(Dpid(v)),
            Raw::Text(t) => {
                let digits = t.strip_prefix("0x").unwrap_or(&t);
                u64::from_str_radix(digits, 16)
                    .map(Dpid)
                    .map_err(|_| serde::de::Error::custom(format!("bad dpid {t:?}")))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn port_ref_uses_walkthrough_notation() {
        let p: PortRef = "s3.p2".parse().unwrap();
        assert_eq!(p, PortRef::new(3, 2));
        assert_eq!(p.to_string(), "s3.p2");
        assert!("s3.p0".parse::<PortRef>().is_err());
        assert!("3:2".parse::<PortRef>().is_err());
    }

    #[test]
    fn dpid_mac_roundtrip() {
        let mac: MacAddr = "02:00:00:00:00:2a".parse().unwrap();
        let dpid = Dpid::from_mac(mac);
        assert_eq!(dpid.default_mac(), mac);
        assert_eq!(mac.to_string(), "02:00:00:00:00:2a");
    }
}
