//! Library surface of the `surveydesc` binary, exposed so integration
//! tests can drive the commands in-process.

pub mod commands;
pub mod config;

/// Log level from `SURVEYDESC_LOG` (`quiet`, `info`, or `debug`); warnings
/// only when unset.
pub fn log_level_from_env() -> log::LevelFilter {
    match std::env::var("SURVEYDESC_LOG").as_deref() {
        Ok("quiet") => log::LevelFilter::Off,
        Ok("info") => log::LevelFilter::Info,
        Ok("debug") => log::LevelFilter::Debug,
        _ => log::LevelFilter::Warn,
    }
}
