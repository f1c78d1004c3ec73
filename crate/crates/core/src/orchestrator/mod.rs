//! Live docent sessions.
//!
//! A session walks the eight flow slots as a state machine. Text comes from
//! a backend, but the checkable rules (one question per reply, steering
//! back after a detour, per-stage budgets, the exchange cap) are enforced on
//! the final reply, so they hold whatever the backend says.

pub mod guard;
pub mod policy;
pub mod session;
pub mod store;

pub use guard::{classify_student_turn, enforce_single_question, topical_overlap, TurnClass, TurnContext};
pub use policy::{
    ContinuingQuestionKind, DocentPolicy, PolicyError, PolicyOverrides, StudentCues, DEFAULT_STEERING_PHRASES,
};
pub use session::{
    close_session, handle_student_turn, history_is_consistent, start_session, Detour, DocentReply, SessionError,
    SessionState, SessionSummary,
};
pub use store::{FileStore, MemoryStore, SessionStore, StoreError};
