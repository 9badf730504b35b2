//! A2A orchestration hub.
//!
//! The hub accepts A2A JSON-RPC `message/send` requests, routes each query
//! deterministically to one of four paths (expense agent, project-management
//! agent, document QA, general QA), attaches boundary-appropriate credentials
//! to downstream calls, and always answers the UI channel with a single text
//! part. A parallel REST tool API exposes the structured record.
//!
//! [`simnet`] provides offline stand-ins for the downstream agents, the token
//! issuer and the ACL-guarded object store; [`bench`] drives the benchmark.

pub mod bench;
pub mod boundaries;
pub mod config;
pub mod docqa;
pub mod downstream;
pub mod envelope;
pub mod generalqa;
pub mod launch;
pub mod router;
pub mod service;
pub mod simnet;

pub use boundaries::{
    AuthMaterial, BoundaryKind, DownstreamTarget, IdToken, TokenCache, TokenProvider,
};
pub use config::{HubConfig, LoadedConfig};
pub use docqa::{Citation, DocQaAnswer, EvidenceStatus, SearchHit};
pub use downstream::{ContainedAnswer, DownstreamOutcome, Pipeline, PipelineOutcome};
pub use envelope::{RpcParams, RpcRequest, RpcResponse};
pub use router::{Route, RouteDecision, RoutingRule, RuleTable};
pub use service::{AgentCard, ToolQueryRequest, ToolQueryResponse};
