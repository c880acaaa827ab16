//! Stable machine error codes.
//!
//! The string form of each code is part of the external contract: it appears in
//! `ErrorNotice` bodies, gateway responses, stream events, CLI diagnostics and
//! the humanization template table.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

macro_rules! error_codes {
    ($($variant:ident),+ $(,)?) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum ErrorCode {
            $($variant),+
        }

        impl ErrorCode {
            pub const ALL: &'static [ErrorCode] = &[$(ErrorCode::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(ErrorCode::$variant => stringify!($variant)),+
                }
            }
        }

        impl FromStr for ErrorCode {
            type Err = ();

            fn from_str(s: &str) -> Result<Self, ()> {
                match s {
                    $(stringify!($variant) => Ok(ErrorCode::$variant),)+
                    _ => Err(()),
                }
            }
        }
    };
}

error_codes! {
    // topology
    MalformedDocument,
    MissingField,
    BadValue,
    UnknownParent,
    DuplicateName,
    CycleDetected,
    // bus
    UnknownSender,
    UnknownRecipient,
    BudgetExhausted,
    // acl
    ParseError,
    AclDeniedAll,
    // agents
    NoUpstream,
    EmptyMessage,
    DomainUnavailable,
    RetriesExhausted,
    // facilitator
    IntegrationTimeout,
    AllChildrenFailed,
    // mediator
    NoAgentsAvailable,
    RosterCollapsed,
    NotAParticipant,
    BoardClosed,
    // harness
    MalformedScenario,
    DanglingReference,
    // gateway
    BadAttributes,
    UnknownSession,
    NoOutstandingIntegration,
    NotYourBoard,
    UnknownRequest,
}

impl ErrorCode {
    /// Errors that make the digital twin park a request and retry it later.
    pub fn is_transient(self) -> bool {
        matches!(
            self,
            ErrorCode::DomainUnavailable | ErrorCode::AllChildrenFailed | ErrorCode::NoAgentsAvailable
        )
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
