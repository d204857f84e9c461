//! Two parties and a referee over TCP.
//!
//! Each party holds one TCP connection to the referee and streams its
//! codeword as framed chunks. The parties never talk to each other and the
//! referee sends nothing back until it has ruled.

pub mod frame;
pub mod party;
pub mod referee;

pub use frame::{
    parse_session_hex, session_hex, AbortCode, FingerprintFrame, FrameError, Role, VerdictMessage, VerdictStatus,
};
pub use party::{run_party, session_id_for, PartyConfig, PartyError, PartyInput, PartyReport};
pub use referee::{run_referee, Referee, RefereeConfig, RoleAccount, SessionError, SessionReport};
