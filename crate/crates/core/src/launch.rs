//! Wiring: config + optional simulator into running HTTP servers.

use crate::boundaries::{Clock, SystemClock, TokenCache, TokenProvider};
use crate::config::{ConfigError, LoadedConfig};
use crate::docqa::{DocQaBackend, LocalIndex, ObjectStore};
use crate::downstream::Pipeline;
use crate::service::{default_skills, router, AgentCard, AgentSkill, HubState};
use crate::simnet::{
    admin_router, AclObjectStore, MockTokenIssuer, RunningAgents, Scenario, SimError, Simulator,
    DEFAULT_TOKEN_LIFETIME_SECS,
};
use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

#[derive(Debug, Error)]
pub enum LaunchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("binding {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("http client: {0}")]
    Http(#[from] reqwest::Error),
}

/// Outbound client. Proxies are ignored: downstreams are addressed directly.
pub fn http_client() -> Result<reqwest::Client, reqwest::Error> {
    reqwest::Client::builder().no_proxy().build()
}

pub fn build_pipeline(
    loaded: &LoadedConfig,
    token_provider: Arc<dyn TokenProvider>,
    store: Arc<dyn ObjectStore>,
    agent_urls: &BTreeMap<String, String>,
    clock: Arc<dyn Clock>,
) -> Result<Pipeline, LaunchError> {
    let config = &loaded.config;
    Ok(Pipeline {
        rules: Arc::new(loaded.rules.clone()),
        targets: config.route_targets(agent_urls)?,
        token_provider,
        token_cache: Arc::new(TokenCache::new(clock)),
        caller_identity: config.identity.caller.clone(),
        http: http_client()?,
        docqa: DocQaBackend {
            search: Arc::new(LocalIndex::new(loaded.documents.iter().cloned())),
            store,
            reader_identity: config.identity.caller.clone(),
            top_k: config.docqa.top_k,
        },
        general: Arc::new(loaded.canned.clone()),
        messages: config.messages.clone(),
    })
}

pub fn agent_card(loaded: &LoadedConfig) -> AgentCard {
    let card = &loaded.config.card;
    let skills = if card.skills.is_empty() {
        default_skills()
    } else {
        card.skills
            .iter()
            .map(|s| AgentSkill {
                id: s.id.clone(),
                name: s.name.clone(),
                description: s.description.clone(),
            })
            .collect()
    };
    AgentCard::new(
        &card.name,
        &card.description,
        &card.url,
        &card.version,
        skills,
    )
}

async fn bind(addr: SocketAddr) -> Result<TcpListener, LaunchError> {
    TcpListener::bind(addr)
        .await
        .map_err(|source| LaunchError::Bind { addr, source })
}

fn serve(listener: TcpListener, app: axum::Router) -> JoinHandle<()> {
    tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            tracing::error!(error = %e, "server stopped");
        }
    })
}

/// A running simulator: agents on loopback plus the admin endpoints.
#[derive(Debug)]
pub struct SimRuntime {
    pub simulator: Arc<Simulator>,
    pub agents: RunningAgents,
    pub admin_addr: SocketAddr,
    admin_task: JoinHandle<()>,
}

impl SimRuntime {
    pub fn admin_url(&self) -> String {
        format!("http://{}", self.admin_addr)
    }

    pub async fn wait(self) {
        let _ = self.admin_task.await;
    }
}

pub async fn launch_simulator(
    simulator: Simulator,
    admin_addr: SocketAddr,
) -> Result<SimRuntime, LaunchError> {
    let simulator = Arc::new(simulator);
    let agents = simulator.start_agents().await?;
    let listener = bind(admin_addr).await?;
    let admin_addr = listener.local_addr().map_err(|source| LaunchError::Bind {
        addr: admin_addr,
        source,
    })?;
    let admin_task = serve(listener, admin_router(simulator.clone()));
    Ok(SimRuntime {
        simulator,
        agents,
        admin_addr,
        admin_task,
    })
}

/// The hub, plus the simulator it talks to when one was requested.
#[derive(Debug)]
pub struct HubRuntime {
    pub hub_addr: SocketAddr,
    pub state: Arc<HubState>,
    pub sim: Option<SimRuntime>,
    hub_task: JoinHandle<()>,
}

impl HubRuntime {
    pub fn hub_url(&self) -> String {
        format!("http://{}", self.hub_addr)
    }

    pub fn simulator(&self) -> Option<&Arc<Simulator>> {
        self.sim.as_ref().map(|s| &s.simulator)
    }

    pub fn admin_url(&self) -> Option<String> {
        self.sim.as_ref().map(SimRuntime::admin_url)
    }

    /// Resolves when the hub server stops.
    pub async fn wait(&mut self) {
        let _ = (&mut self.hub_task).await;
    }
}

impl Drop for HubRuntime {
    fn drop(&mut self) {
        self.hub_task.abort();
        if let Some(sim) = &self.sim {
            sim.admin_task.abort();
        }
    }
}

/// Starts the hub on `hub_addr`. With a scenario, the simulator is started
/// too: its issuer mints the hub's tokens, its object store holds the corpus,
/// and `sim://<agent>` targets point at its agents.
pub async fn launch(
    loaded: LoadedConfig,
    scenario: Option<Scenario>,
    hub_addr: SocketAddr,
    admin_addr: SocketAddr,
) -> Result<HubRuntime, LaunchError> {
    let clock: Arc<dyn Clock> = Arc::new(SystemClock);
    let (sim, token_provider, store): (
        Option<SimRuntime>,
        Arc<dyn TokenProvider>,
        Arc<dyn ObjectStore>,
    ) = match scenario {
        Some(mut scenario) => {
            let mut acl = loaded.config.acl.clone();
            acl.append(&mut scenario.acl);
            scenario.acl = acl;
            let simulator =
                Simulator::new(scenario, loaded.documents.iter().cloned(), clock.clone())?;
            let rt = launch_simulator(simulator, admin_addr).await?;
            let issuer = rt.simulator.issuer();
            let store = rt.simulator.store();
            (Some(rt), issuer, store)
        }
        None => (
            None,
            Arc::new(MockTokenIssuer::new(
                clock.clone(),
                DEFAULT_TOKEN_LIFETIME_SECS,
            )),
            Arc::new(AclObjectStore::new(
                loaded.documents.iter().cloned(),
                loaded.config.acl.clone(),
            )),
        ),
    };
    let agent_urls = sim
        .as_ref()
        .map(|s| s.agents.urls.clone())
        .unwrap_or_default();
    let pipeline = build_pipeline(&loaded, token_provider, store, &agent_urls, clock)?;
    let state = Arc::new(HubState::new(
        pipeline,
        &agent_card(&loaded),
        &loaded.config.identity.build,
    ));
    let listener = bind(hub_addr).await?;
    let hub_addr = listener.local_addr().map_err(|source| LaunchError::Bind {
        addr: hub_addr,
        source,
    })?;
    let hub_task = serve(listener, router(state.clone()));
    tracing::info!(%hub_addr, "hub listening");
    Ok(HubRuntime {
        hub_addr,
        state,
        sim,
        hub_task,
    })
}
