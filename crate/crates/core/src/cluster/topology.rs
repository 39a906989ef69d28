//! Topology file parsing and the built-in service graphs.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use super::quantity::ResourceQuantity;

pub const TT_LIKE: &str = include_str!("../../topologies/tt_like.yaml");
pub const OB_LIKE: &str = include_str!("../../topologies/ob_like.yaml");
pub const SM_LIKE: &str = include_str!("../../topologies/sm_like.yaml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemId {
    TtLike,
    ObLike,
    SmLike,
}

impl SystemId {
    pub fn builtin_topology(self) -> &'static str {
        match self {
            SystemId::TtLike => TT_LIKE,
            SystemId::ObLike => OB_LIKE,
            SystemId::SmLike => SM_LIKE,
        }
    }

    pub const ALL: [SystemId; 3] = [SystemId::TtLike, SystemId::ObLike, SystemId::SmLike];
}

impl fmt::Display for SystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SystemId::TtLike => "tt_like",
            SystemId::ObLike => "ob_like",
            SystemId::SmLike => "sm_like",
        };
        write!(f, "{s}")
    }
}

impl FromStr for SystemId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tt" | "tt_like" => Ok(SystemId::TtLike),
            "ob" | "ob_like" => Ok(SystemId::ObLike),
            "sm" | "sm_like" => Ok(SystemId::SmLike),
            other => Err(format!(
                "unknown system id {other:?} (expected tt, ob or sm)"
            )),
        }
    }
}

/// Static service dependency graph of a topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceGraph {
    pub system_id: SystemId,
    pub services: Vec<String>,
    pub edges: Vec<(String, String)>,
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("topology parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate service {0:?}")]
    DuplicateService(String),
    #[error("edge references undeclared service {0:?}")]
    UnknownEdgeService(String),
    #[error("service graph is not connected (service {0:?} is unreachable)")]
    Disconnected(String),
    #[error("service {service:?}: {message}")]
    InvalidService { service: String, message: String },
}

/// One service declaration from a topology file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceDecl {
    pub name: String,
    pub replicas: u32,
    pub requests: ResourcePairDecl,
    pub limits: ResourcePairDecl,
    #[serde(default)]
    pub env: IndexMap<String, String>,
    #[serde(default)]
    pub image: Option<String>,
    #[serde(default)]
    pub base_cpu: Option<String>,
    #[serde(default)]
    pub base_mem: Option<String>,
    #[serde(default)]
    pub base_latency_ms: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourcePairDecl {
    pub cpu: String,
    pub memory: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyFile {
    pub system_id: SystemId,
    pub namespace: String,
    pub services: Vec<ServiceDecl>,
    #[serde(default)]
    pub edges: Vec<(String, String)>,
}

/// Validated topology with quantities resolved.
#[derive(Debug, Clone)]
pub struct Topology {
    pub system_id: SystemId,
    pub namespace: String,
    pub services: Vec<ServiceSpec>,
    pub edges: Vec<(String, String)>,
}

#[derive(Debug, Clone)]
pub struct ServiceSpec {
    pub name: String,
    pub replicas: u32,
    pub image: String,
    pub requests_cpu: ResourceQuantity,
    pub requests_mem: ResourceQuantity,
    pub limits_cpu: ResourceQuantity,
    pub limits_mem: ResourceQuantity,
    pub env: IndexMap<String, String>,
    pub base_cpu_millis: u64,
    pub base_mem_mib: u64,
    pub base_latency_ms: f64,
}

impl Topology {
    pub fn graph(&self) -> ServiceGraph {
        ServiceGraph {
            system_id: self.system_id,
            services: self.services.iter().map(|s| s.name.clone()).collect(),
            edges: self.edges.clone(),
        }
    }
}

pub fn parse_topology(text: &str) -> Result<Topology, TopologyError> {
    let file: TopologyFile = serde_yaml::from_str(text).map_err(|e| TopologyError::Parse {
        line: e.location().map(|l| l.line()).unwrap_or(0),
        message: e.to_string(),
    })?;

    let mut seen = BTreeSet::new();
    let mut services = Vec::with_capacity(file.services.len());
    for decl in &file.services {
        if !seen.insert(decl.name.clone()) {
            return Err(TopologyError::DuplicateService(decl.name.clone()));
        }
        services.push(resolve_service(decl)?);
    }

    for (a, b) in &file.edges {
        for end in [a, b] {
            if !seen.contains(end) {
                return Err(TopologyError::UnknownEdgeService(end.clone()));
            }
        }
    }

    check_connected(&services, &file.edges)?;

    Ok(Topology {
        system_id: file.system_id,
        namespace: file.namespace,
        services,
        edges: file.edges,
    })
}

fn resolve_service(decl: &ServiceDecl) -> Result<ServiceSpec, TopologyError> {
    let invalid = |message: String| TopologyError::InvalidService {
        service: decl.name.clone(),
        message,
    };
    let qty = |r: Result<ResourceQuantity, super::quantity::QuantityError>| {
        r.map_err(|e| invalid(e.to_string()))
    };

    let requests_cpu = qty(ResourceQuantity::parse_cpu(&decl.requests.cpu))?;
    let requests_mem = qty(ResourceQuantity::parse_mem(&decl.requests.memory))?;
    let limits_cpu = qty(ResourceQuantity::parse_cpu(&decl.limits.cpu))?;
    let limits_mem = qty(ResourceQuantity::parse_mem(&decl.limits.memory))?;
    if requests_cpu > limits_cpu || requests_mem > limits_mem {
        return Err(invalid("requests exceed limits".into()));
    }

    let base_cpu_millis = match &decl.base_cpu {
        Some(t) => qty(ResourceQuantity::parse_cpu(t))?.millis,
        None => 0,
    };
    let base_mem_mib = match &decl.base_mem {
        Some(t) => qty(ResourceQuantity::parse_mem(t))?.millis,
        None => 0,
    };

    Ok(ServiceSpec {
        name: decl.name.clone(),
        replicas: decl.replicas,
        image: decl
            .image
            .clone()
            .unwrap_or_else(|| format!("registry.local/{}:1.0", decl.name)),
        requests_cpu,
        requests_mem,
        limits_cpu,
        limits_mem,
        env: decl.env.clone(),
        base_cpu_millis,
        base_mem_mib,
        base_latency_ms: decl.base_latency_ms.unwrap_or(5.0),
    })
}

fn check_connected(
    services: &[ServiceSpec],
    edges: &[(String, String)],
) -> Result<(), TopologyError> {
    if services.len() <= 1 {
        return Ok(());
    }
    let mut reached = BTreeSet::new();
    let mut stack = vec![services[0].name.clone()];
    while let Some(s) = stack.pop() {
        if !reached.insert(s.clone()) {
            continue;
        }
        for (a, b) in edges {
            if *a == s && !reached.contains(b) {
                stack.push(b.clone());
            }
            if *b == s && !reached.contains(a) {
                stack.push(a.clone());
            }
        }
    }
    for svc in services {
        if !reached.contains(&svc.name) {
            return Err(TopologyError::Disconnected(svc.name.clone()));
        }
    }
    Ok(())
}
