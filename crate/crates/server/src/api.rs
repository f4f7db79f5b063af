//! Endpoint dispatch. Transport-independent: the axum adapter and the
//! in-process transport both call [`Api::handle`].

use std::sync::Arc;

use serde::de::DeserializeOwned;
use watn_core::invite::{invite_link, InviteError, InviteKey, InviteToken};
use watn_core::store::StoreError;
use watn_core::wire::{
    AcceptRequest, AcceptResponse, AuthBody, CheckinRequest, CheckinResponse, ErrorCode,
    InviteResponse, Method, OkResponse, RevokeRequest, WireRequest, WireResponse,
};
use watn_core::{Credential, GeoPoint, Millis, ParticipantId, Store};

pub struct Api {
    store: Arc<Store>,
    key: InviteKey,
    invite_ttl_ms: Millis,
}

type Reply = Result<WireResponse, ErrorCode>;

fn store_code(e: StoreError) -> ErrorCode {
    match e {
        StoreError::AuthFailed => ErrorCode::AuthFailed,
        StoreError::OutOfRange(_) => ErrorCode::OutOfRange,
        StoreError::MsgTooLong(_) => ErrorCode::MsgTooLong,
        StoreError::SelfShare => ErrorCode::SelfShare,
        StoreError::UnknownParticipant => ErrorCode::UnknownParticipant,
        StoreError::NotParty => ErrorCode::NotParty,
        StoreError::NotShared => ErrorCode::NotShared,
        StoreError::InviteUsed => ErrorCode::UsedToken,
    }
}

fn invite_code(e: InviteError) -> ErrorCode {
    match e {
        InviteError::BadFormat | InviteError::BadMac => ErrorCode::BadToken,
        InviteError::Expired => ErrorCode::ExpiredToken,
    }
}

fn body<T: DeserializeOwned>(req: &WireRequest) -> Result<T, ErrorCode> {
    serde_json::from_slice(&req.body).map_err(|_| ErrorCode::BadRequest)
}

fn ok<T: serde::Serialize>(value: &T) -> Reply {
    Ok(WireResponse::json(200, value))
}

/// Query-string parameters for the read endpoints. Unknown or repeated keys
/// are rejected.
#[derive(Default)]
struct ReadParams {
    id: Option<ParticipantId>,
    secret: Option<String>,
    target: Option<ParticipantId>,
    limit: Option<usize>,
}

impl ReadParams {
    fn parse(req: &WireRequest, allowed: &[&str]) -> Result<Self, ErrorCode> {
        let mut p = ReadParams::default();
        for (k, v) in &req.query {
            if !allowed.contains(&k.as_str()) {
                return Err(ErrorCode::BadRequest);
            }
            let dup = match k.as_str() {
                "id" => {
                    p.id.replace(ParticipantId::parse(v).map_err(|_| ErrorCode::BadRequest)?)
                        .is_some()
                }
                "secret" => p.secret.replace(v.clone()).is_some(),
                "target" => p
                    .target
                    .replace(ParticipantId::parse(v).map_err(|_| ErrorCode::BadRequest)?)
                    .is_some(),
                "limit" => p
                    .limit
                    .replace(v.parse().map_err(|_| ErrorCode::BadRequest)?)
                    .is_some(),
                _ => unreachable!(),
            };
            if dup {
                return Err(ErrorCode::BadRequest);
            }
        }
        Ok(p)
    }

    fn credential(&mut self) -> Result<Credential, ErrorCode> {
        match (self.id.take(), self.secret.take()) {
            (Some(id), Some(secret)) => Ok(Credential { id, secret }),
            _ => Err(ErrorCode::BadRequest),
        }
    }
}

impl Api {
    pub fn new(store: Arc<Store>, key: InviteKey, invite_ttl_ms: Millis) -> Self {
        Api {
            store,
            key,
            invite_ttl_ms,
        }
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn key(&self) -> &InviteKey {
        &self.key
    }

    /// Serves one request. Every response body is JSON; errors are
    /// `{"error": <code>}`.
    pub fn handle(&self, req: &WireRequest) -> WireResponse {
        let route = match (req.method, req.path.as_str()) {
            (Method::Post, "/register") => self.register(),
            (Method::Post, "/checkin") => self.checkin(req),
            (Method::Get, "/feed") => self.feed(req),
            (Method::Post, "/invite") => self.invite(req),
            (Method::Post, "/accept") => self.accept(req),
            (Method::Post, "/revoke") => self.revoke(req),
            (Method::Get, "/readers") => self.readers(req),
            (Method::Get, "/sharers") => self.sharers(req),
            (Method::Get, "/history") => self.history(req),
            (Method::Post, "/delete") => self.delete(req),
            (
                _,
                "/register" | "/checkin" | "/feed" | "/invite" | "/accept" | "/revoke" | "/readers"
                | "/sharers" | "/history" | "/delete",
            ) => Err(ErrorCode::MethodNotAllowed),
            _ => Err(ErrorCode::NotFound),
        };
        route.unwrap_or_else(WireResponse::error)
    }

    // The request body is ignored: registration takes no input.
    fn register(&self) -> Reply {
        ok(&self.store.register())
    }

    fn checkin(&self, req: &WireRequest) -> Reply {
        let r: CheckinRequest = body(req)?;
        let cred = Credential {
            id: r.id,
            secret: r.secret,
        };
        let point = GeoPoint {
            lat: r.lat,
            lng: r.lng,
        };
        let c = self
            .store
            .checkin(&cred, point, r.msg)
            .map_err(store_code)?;
        ok(&CheckinResponse { ts: c.ts })
    }

    fn feed(&self, req: &WireRequest) -> Reply {
        let cred = ReadParams::parse(req, &["id", "secret"])?.credential()?;
        ok(&self.store.feed(&cred).map_err(store_code)?)
    }

    fn invite(&self, req: &WireRequest) -> Reply {
        let r: AuthBody = body(req)?;
        let cred = Credential {
            id: r.id,
            secret: r.secret,
        };
        let nonce = self.store.issue_nonce(&cred).map_err(store_code)?;
        let token = InviteToken {
            sharer: cred.id,
            nonce,
            expiry: self.store.now_ms().saturating_add(self.invite_ttl_ms),
        }
        .encode(&self.key);
        let link = invite_link(&token);
        ok(&InviteResponse { token, link })
    }

    fn accept(&self, req: &WireRequest) -> Reply {
        let r: AcceptRequest = body(req)?;
        let token =
            InviteToken::decode(&r.token, &self.key, self.store.now_ms()).map_err(invite_code)?;
        let cred = Credential {
            id: r.id,
            secret: r.secret,
        };
        self.store
            .redeem_invite(&cred, &token.sharer, token.nonce)
            .map_err(store_code)?;
        ok(&AcceptResponse {
            sharer: token.sharer,
        })
    }

    fn revoke(&self, req: &WireRequest) -> Reply {
        let r: RevokeRequest = body(req)?;
        let cred = Credential {
            id: r.id,
            secret: r.secret,
        };
        self.store
            .revoke(&cred, &r.sharer, &r.reader)
            .map_err(store_code)?;
        ok(&OkResponse { ok: true })
    }

    fn readers(&self, req: &WireRequest) -> Reply {
        let cred = ReadParams::parse(req, &["id", "secret"])?.credential()?;
        ok(&self.store.readers_of(&cred).map_err(store_code)?)
    }

    fn sharers(&self, req: &WireRequest) -> Reply {
        let cred = ReadParams::parse(req, &["id", "secret"])?.credential()?;
        ok(&self.store.sharers_to(&cred).map_err(store_code)?)
    }

    fn history(&self, req: &WireRequest) -> Reply {
        let mut p = ReadParams::parse(req, &["id", "secret", "target", "limit"])?;
        let cred = p.credential()?;
        let target = p.target.take().unwrap_or_else(|| cred.id.clone());
        let limit = p.limit.unwrap_or(self.store.history_cap());
        ok(&self
            .store
            .history_of(&cred, &target, limit)
            .map_err(store_code)?)
    }

    fn delete(&self, req: &WireRequest) -> Reply {
        let r: AuthBody = body(req)?;
        let cred = Credential {
            id: r.id,
            secret: r.secret,
        };
        self.store.delete_participant(&cred).map_err(store_code)?;
        ok(&OkResponse { ok: true })
    }
}
