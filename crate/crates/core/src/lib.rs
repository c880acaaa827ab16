pub mod acl;
pub mod agent;
pub mod bus;
pub mod code;
pub mod event;
pub mod facilitator;
pub mod harness;
pub mod mediator;
pub mod message;
pub mod runtime;
pub mod text;
pub mod topology;
