pub mod checks;
pub mod fusion;
pub mod oracle;
pub mod tiny;
