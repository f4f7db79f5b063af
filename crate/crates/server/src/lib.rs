//! HTTP/JSON server for WATN.
//!
//! [`Api`] implements every endpoint over a shared [`watn_core::Store`] and
//! owns the invite signing key. [`http`] exposes it over HTTP/1.1 with axum;
//! [`LocalTransport`] calls it in-process, which is what the test suites and
//! the scenario fuzzer use.
//!
//! | endpoint          | body / query                         | 200 response            |
//! |-------------------|--------------------------------------|-------------------------|
//! | `POST /register`  | ignored                              | `{"id","secret"}`       |
//! | `POST /checkin`   | `{"id","secret","lat","lng","msg"?}` | `{"ts"}`                |
//! | `GET /feed`       | `id, secret`                         | `[{"id","lat","lng","ts","msg"?}]` |
//! | `POST /invite`    | `{"id","secret"}`                    | `{"token","link"}`      |
//! | `POST /accept`    | `{"token","id","secret"}`            | `{"sharer"}`            |
//! | `POST /revoke`    | `{"id","secret","sharer","reader"}`  | `{"ok":true}`           |
//! | `GET /readers`    | `id, secret`                         | `[id, ...]`             |
//! | `GET /sharers`    | `id, secret`                         | `[id, ...]`             |
//! | `GET /history`    | `id, secret, target?, limit?`        | `[{"lat","lng","ts","msg"?}]` |
//! | `POST /delete`    | `{"id","secret"}`                    | `{"ok":true}`           |

mod api;
pub mod config;
pub mod http;
mod local;
pub mod runtime;

pub use api::Api;
pub use config::ApiConfig;
pub use http::ServerHandle;
pub use local::LocalTransport;
