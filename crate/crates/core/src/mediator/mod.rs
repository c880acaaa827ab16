//! Ephemeral task mediation over a shared agora board.

mod agent;
mod agora;

pub use agent::{AgentTemplate, MediatorAgent, MediatorSettings, Stage};
pub use agora::{AgoraBoard, AgoraEntry, AgoraError, AgoraStore};
