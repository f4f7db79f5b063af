//! Command-line front end for WATN plus the tools used to exercise the whole
//! stack: a scripted scenario runner and a randomized simulator checked
//! against a brute-force model.

pub mod cli;
pub mod oracle;
pub mod scenario;
pub mod sim;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/identity.md")]
    pub struct Identity;
    #[doc = include_str!("../../../book/src/invites.md")]
    pub struct Invites;
    #[doc = include_str!("../../../book/src/accept.md")]
    pub struct Accept;
    #[doc = include_str!("../../../book/src/offline.md")]
    pub struct Offline;
    #[doc = include_str!("../../../book/src/wire.md")]
    pub struct Wire;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
