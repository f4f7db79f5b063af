use std::fmt;
use std::io;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use thiserror::Error;
use watn_core::invite::token_from_link;
use watn_core::wire::{
    AcceptRequest, AcceptResponse, AuthBody, CheckinRequest, CheckinResponse, ErrorBody,
    InviteResponse, OkResponse, RevokeRequest, Transport, TransportError, WireRequest,
};
use watn_core::{CheckIn, Clock, Credential, FeedEntry, Millis, ParticipantId, SystemClock};

use crate::persist::StateStore;
use crate::resolve::{resolve, ResolvedEntry};
use crate::state::{Legend, LocalState, NAME_MAX_BYTES};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("no local identity yet; run bootstrap first")]
    NotBootstrapped,
    #[error("server unreachable: {0}")]
    ServerUnreachable(String),
    #[error("server rejected credentials")]
    AuthFailed,
    #[error("server rejected request: {code} (HTTP {status})")]
    Rejected { status: u16, code: String },
    #[error("unexpected server response: {0}")]
    Protocol(String),
    /// The share edge exists on the server but the legend entry could not be
    /// saved. Saving the name again (`set_name`) completes the acceptance.
    #[error(
        "invite accepted on the server but the local name for {sharer} was not saved: {source}"
    )]
    PartialCommit {
        sharer: ParticipantId,
        name: String,
        #[source]
        source: io::Error,
    },
    #[error("nothing cached yet")]
    NoCache,
    #[error("name is {0} bytes, limit is {NAME_MAX_BYTES}")]
    NameTooLong(usize),
    #[error("name must not be empty")]
    EmptyName,
    #[error("local state: {0}")]
    Persist(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// The peer shares to us; revoking stops us reading them.
    Incoming,
    /// We share to the peer; revoking stops them reading us.
    Outgoing,
}

/// Resolved feed plus how old the underlying data is.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedView {
    pub entries: Vec<ResolvedEntry>,
    pub staleness_ms: Millis,
    /// True when served from cache because the server could not be reached.
    pub offline: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Invite {
    pub token: String,
    pub link: String,
}

impl Invite {
    /// Text to paste into an email or SMS. Composed locally; `hint` never
    /// reaches the server.
    pub fn message(&self, hint: Option<&str>) -> String {
        let greeting = match hint {
            Some(h) => format!("Hi {h}! "),
            None => String::new(),
        };
        format!(
            "{greeting}I'd like to share my location with you. Open this link to accept:\n{}",
            self.link
        )
    }
}

fn check_name(name: &str) -> Result<(), ClientError> {
    if name.is_empty() {
        return Err(ClientError::EmptyName);
    }
    if name.len() > NAME_MAX_BYTES {
        return Err(ClientError::NameTooLong(name.len()));
    }
    Ok(())
}

/// One participant's client: credential, legend and cache on the local
/// device, everything else on the server.
///
/// Names are only ever read from and written to the local [`StateStore`];
/// no request built here carries one.
pub struct Client<T, S> {
    transport: T,
    store: S,
    state: LocalState,
    clock: Arc<dyn Clock>,
}

impl<T, S> fmt::Debug for Client<T, S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Client")
            .field("own", &self.state.own.as_ref().map(|c| &c.id))
            .field("legend_len", &self.state.legend.len())
            .finish_non_exhaustive()
    }
}

impl<T: Transport, S: StateStore> Client<T, S> {
    /// Loads whatever state `store` holds. Makes no network calls.
    pub fn open(transport: T, store: S) -> Result<Self, ClientError> {
        Self::with_clock(transport, store, Arc::new(SystemClock))
    }

    pub fn with_clock(transport: T, store: S, clock: Arc<dyn Clock>) -> Result<Self, ClientError> {
        let state = store.load()?.unwrap_or_default();
        Ok(Client {
            transport,
            store,
            state,
            clock,
        })
    }

    pub fn state(&self) -> &LocalState {
        &self.state
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn credential(&self) -> Option<&Credential> {
        self.state.own.as_ref()
    }

    pub fn id(&self) -> Option<&ParticipantId> {
        self.state.own.as_ref().map(|c| &c.id)
    }

    fn own(&self) -> Result<&Credential, ClientError> {
        self.state.own.as_ref().ok_or(ClientError::NotBootstrapped)
    }

    fn auth_body(&self) -> Result<AuthBody, ClientError> {
        let c = self.own()?;
        Ok(AuthBody {
            id: c.id.clone(),
            secret: c.secret.clone(),
        })
    }

    fn authed_get(&self, path: &str) -> Result<WireRequest, ClientError> {
        let c = self.own()?;
        Ok(WireRequest::get(path)
            .param("id", c.id.as_str())
            .param("secret", c.secret.as_str()))
    }

    fn call<R: DeserializeOwned>(&self, req: &WireRequest) -> Result<R, ClientError> {
        let resp = self.transport.send(req).map_err(|e| match e {
            TransportError::Unreachable(m) => ClientError::ServerUnreachable(m),
            TransportError::Other(m) => ClientError::Protocol(m),
        })?;
        if resp.status == 401 {
            return Err(ClientError::AuthFailed);
        }
        if !resp.is_success() {
            let code = serde_json::from_slice::<ErrorBody>(&resp.body)
                .map(|b| b.error)
                .unwrap_or_else(|_| "unknown".into());
            return Err(ClientError::Rejected {
                status: resp.status,
                code,
            });
        }
        serde_json::from_slice(&resp.body).map_err(|e| ClientError::Protocol(e.to_string()))
    }

    /// Returns the stored credential, or registers and stores a new one.
    /// Only the very first run needs the server.
    pub fn bootstrap(&mut self) -> Result<Credential, ClientError> {
        if let Some(c) = &self.state.own {
            return Ok(c.clone());
        }
        let cred: Credential = self.call(&WireRequest::post("/register"))?;
        self.state.own = Some(cred.clone());
        if let Err(e) = self.store.save(&self.state) {
            self.state.own = None;
            return Err(e.into());
        }
        Ok(cred)
    }

    /// Two-phase acceptance of an invite.
    ///
    /// Phase one redeems the token on the server, creating the share edge
    /// and revealing the sharer's id. Phase two records `name` for that id in
    /// the local legend. If phase one fails nothing changes locally. If phase
    /// two fails the edge stays and [`ClientError::PartialCommit`] is
    /// returned; until it is repaired the sharer simply shows up under its
    /// raw id.
    pub fn accept_invite(
        &mut self,
        link_or_token: &str,
        name: &str,
    ) -> Result<ParticipantId, ClientError> {
        check_name(name)?;
        let own = self.own()?;
        let req = AcceptRequest {
            token: token_from_link(link_or_token).to_owned(),
            id: own.id.clone(),
            secret: own.secret.clone(),
        };
        let AcceptResponse { sharer } = self.call(&WireRequest::post_json("/accept", &req))?;
        match self.write_name(&sharer, name) {
            Ok(()) => Ok(sharer),
            Err(source) => Err(ClientError::PartialCommit {
                sharer,
                name: name.to_owned(),
                source,
            }),
        }
    }

    /// Legend update that only sticks in memory if it sticks on disk.
    fn write_name(&mut self, id: &ParticipantId, name: &str) -> io::Result<()> {
        let previous = self.state.legend.insert(id.clone(), name.to_owned());
        self.store
            .save(&self.state)
            .inspect_err(|_| match previous {
                Some(p) => {
                    self.state.legend.insert(id.clone(), p);
                }
                None => {
                    self.state.legend.remove(id);
                }
            })
    }

    /// Fetches the feed, caches the raw entries and resolves them. If the
    /// server cannot be reached, falls back to [`Client::cached`].
    pub fn refresh(&mut self) -> Result<FeedView, ClientError> {
        let req = self.authed_get("/feed")?;
        let entries: Vec<FeedEntry> = match self.call(&req) {
            Ok(e) => e,
            Err(ClientError::ServerUnreachable(m)) => {
                return self.cached().map_err(|e| match e {
                    ClientError::NoCache => ClientError::ServerUnreachable(m),
                    other => other,
                });
            }
            Err(e) => return Err(e),
        };
        let resolved = resolve(&entries, &self.state.legend);
        let previous = (self.state.cache.take(), self.state.fetched_ts.take());
        self.state.cache = Some(entries);
        self.state.fetched_ts = Some(self.clock.now_ms());
        if let Err(e) = self.store.save(&self.state) {
            (self.state.cache, self.state.fetched_ts) = previous;
            return Err(e.into());
        }
        Ok(FeedView {
            entries: resolved,
            staleness_ms: 0,
            offline: false,
        })
    }

    /// The last fetched feed, resolved against the legend as it is now.
    pub fn cached(&self) -> Result<FeedView, ClientError> {
        let (Some(entries), Some(fetched)) = (&self.state.cache, self.state.fetched_ts) else {
            return Err(ClientError::NoCache);
        };
        Ok(FeedView {
            entries: resolve(entries, &self.state.legend),
            staleness_ms: self.clock.now_ms().saturating_sub(fetched),
            offline: true,
        })
    }

    /// Local only.
    pub fn set_name(&mut self, id: &ParticipantId, name: &str) -> Result<(), ClientError> {
        check_name(name)?;
        self.write_name(id, name)?;
        Ok(())
    }

    /// Local only. Returns whether an entry was removed.
    pub fn remove_name(&mut self, id: &ParticipantId) -> Result<bool, ClientError> {
        let Some(old) = self.state.legend.remove(id) else {
            return Ok(false);
        };
        if let Err(e) = self.store.save(&self.state) {
            self.state.legend.insert(id.clone(), old);
            return Err(e.into());
        }
        Ok(true)
    }

    pub fn legend(&self) -> &Legend {
        &self.state.legend
    }

    /// Asks the server for a fresh invite naming us as sharer. Delivering the
    /// link is up to the caller.
    pub fn share(&self) -> Result<Invite, ClientError> {
        let r: InviteResponse =
            self.call(&WireRequest::post_json("/invite", &self.auth_body()?))?;
        Ok(Invite {
            token: r.token,
            link: r.link,
        })
    }

    /// Returns the server-assigned timestamp.
    pub fn checkin_here(
        &self,
        lat: f64,
        lng: f64,
        msg: Option<&str>,
    ) -> Result<Millis, ClientError> {
        let own = self.own()?;
        let req = CheckinRequest {
            id: own.id.clone(),
            secret: own.secret.clone(),
            lat,
            lng,
            msg: msg.map(str::to_owned),
        };
        let r: CheckinResponse = self.call(&WireRequest::post_json("/checkin", &req))?;
        Ok(r.ts)
    }

    pub fn revoke_peer(
        &self,
        peer: &ParticipantId,
        direction: Direction,
    ) -> Result<(), ClientError> {
        let own = self.own()?;
        let (sharer, reader) = match direction {
            Direction::Incoming => (peer.clone(), own.id.clone()),
            Direction::Outgoing => (own.id.clone(), peer.clone()),
        };
        let req = RevokeRequest {
            id: own.id.clone(),
            secret: own.secret.clone(),
            sharer,
            reader,
        };
        let _: OkResponse = self.call(&WireRequest::post_json("/revoke", &req))?;
        Ok(())
    }

    /// Who can read our location.
    pub fn readers(&self) -> Result<Vec<ParticipantId>, ClientError> {
        self.call(&self.authed_get("/readers")?)
    }

    /// Whose location we can read.
    pub fn sharers(&self) -> Result<Vec<ParticipantId>, ClientError> {
        self.call(&self.authed_get("/sharers")?)
    }

    pub fn history(
        &self,
        target: &ParticipantId,
        limit: usize,
    ) -> Result<Vec<CheckIn>, ClientError> {
        let req = self
            .authed_get("/history")?
            .param("target", target.as_str())
            .param("limit", limit.to_string());
        self.call(&req)
    }

    /// Deletes our id on the server, then forgets everything local: credential,
    /// legend and cache. The next bootstrap registers a new id.
    pub fn wipe(&mut self) -> Result<(), ClientError> {
        match self.call::<OkResponse>(&WireRequest::post_json("/delete", &self.auth_body()?)) {
            // already gone server-side
            Ok(_) | Err(ClientError::AuthFailed) => {}
            Err(e) => return Err(e),
        }
        self.store.erase()?;
        self.state = LocalState::default();
        Ok(())
    }
}
