use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// A Kubernetes-style resource quantity stored at milli precision.
///
/// CPU quantities count millicores ("500m" parses to 500, "1" to 1000) and
/// memory quantities count mebibytes ("128Mi" parses to 128). The dimension is
/// carried by the field the quantity lives in, not by the value itself, so
/// parsing and formatting take the dimension explicitly.
///
/// Canonical rendering always uses the suffixed form (`500m`, `1000m`,
/// `128Mi`): bare core counts and `Gi` inputs are accepted and normalized.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ResourceQuantity {
    pub millis: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid quantity {text:?} for {dimension} resource")]
pub struct QuantityError {
    pub text: String,
    pub dimension: &'static str,
}

impl ResourceQuantity {
    pub const fn from_millis(millis: u64) -> Self {
        Self { millis }
    }

    /// Parse a CPU quantity: `"500m"` millicores, or whole/decimal cores
    /// (`"1"`, `"0.5"`) when the value is exactly representable in millis.
    pub fn parse_cpu(text: &str) -> Result<Self, QuantityError> {
        let err = || QuantityError {
            text: text.to_string(),
            dimension: "cpu",
        };
        let t = text.trim();
        if let Some(m) = t.strip_suffix('m') {
            let millis: u64 = m.parse().map_err(|_| err())?;
            return Ok(Self { millis });
        }
        if let Some((whole, frac)) = t.split_once('.') {
            let whole: u64 = whole.parse().map_err(|_| err())?;
            if frac.is_empty() || frac.len() > 3 || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(err());
            }
            let frac_millis: u64 =
                frac.parse::<u64>().map_err(|_| err())? * 10u64.pow(3 - frac.len() as u32);
            return Ok(Self {
                millis: whole * 1000 + frac_millis,
            });
        }
        let cores: u64 = t.parse().map_err(|_| err())?;
        Ok(Self {
            millis: cores * 1000,
        })
    }

    /// Parse a memory quantity: `"128Mi"` mebibytes or `"1Gi"` (= 1024 Mi).
    pub fn parse_mem(text: &str) -> Result<Self, QuantityError> {
        let err = || QuantityError {
            text: text.to_string(),
            dimension: "memory",
        };
        let t = text.trim();
        if let Some(m) = t.strip_suffix("Mi") {
            let mib: u64 = m.parse().map_err(|_| err())?;
            return Ok(Self { millis: mib });
        }
        if let Some(g) = t.strip_suffix("Gi") {
            let gib: u64 = g.parse().map_err(|_| err())?;
            return Ok(Self { millis: gib * 1024 });
        }
        Err(err())
    }

    pub fn format_cpu(&self) -> String {
        format!("{}m", self.millis)
    }

    pub fn format_mem(&self) -> String {
        format!("{}Mi", self.millis)
    }
}

impl fmt::Display for ResourceQuantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.millis)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cpu_parse_forms() {
        assert_eq!(ResourceQuantity::parse_cpu("500m").unwrap().millis, 500);
        assert_eq!(ResourceQuantity::parse_cpu("1").unwrap().millis, 1000);
        assert_eq!(ResourceQuantity::parse_cpu("0.5").unwrap().millis, 500);
        assert_eq!(ResourceQuantity::parse_cpu("1.25").unwrap().millis, 1250);
        assert!(ResourceQuantity::parse_cpu("abc").is_err());
        assert!(ResourceQuantity::parse_cpu("1.2345").is_err());
        assert!(ResourceQuantity::parse_cpu("-5m").is_err());
    }

    #[test]
    fn mem_parse_forms() {
        assert_eq!(ResourceQuantity::parse_mem("128Mi").unwrap().millis, 128);
        assert_eq!(ResourceQuantity::parse_mem("1Gi").unwrap().millis, 1024);
        assert!(ResourceQuantity::parse_mem("128").is_err());
        assert!(ResourceQuantity::parse_mem("128Ki").is_err());
    }

    #[test]
    fn canonical_round_trip() {
        for millis in [0u64, 1, 100, 500, 999, 1000, 1500, 2000, 12345] {
            let q = ResourceQuantity::from_millis(millis);
            assert_eq!(ResourceQuantity::parse_cpu(&q.format_cpu()).unwrap(), q);
            assert_eq!(ResourceQuantity::parse_mem(&q.format_mem()).unwrap(), q);
        }
        // accepted input forms normalize to the canonical suffixed rendering
        assert_eq!(
            ResourceQuantity::parse_cpu("1").unwrap().format_cpu(),
            "1000m"
        );
        assert_eq!(
            ResourceQuantity::parse_mem("1Gi").unwrap().format_mem(),
            "1024Mi"
        );
    }
}
