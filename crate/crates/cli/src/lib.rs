//! Command implementations for the `sgdns` binary.

pub mod commands;
pub mod server;

/// Process exit statuses.
pub mod exit {
    pub const OK: u8 = 0;
    pub const ENVIRONMENT: u8 = 1;
    pub const VALIDATION: u8 = 2;
    pub const NOT_CONVERGED: u8 = 3;
    pub const VIOLATIONS: u8 = 4;
}
