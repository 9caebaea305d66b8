//! Minimal stderr logger gated by the KZQ_LOG environment variable
//! (error | warn | info | debug; default warn).

use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum Level {
    Error = 0,
    Warn = 1,
    Info = 2,
    Debug = 3,
}

fn threshold() -> Level {
    static LEVEL: OnceLock<Level> = OnceLock::new();
    *LEVEL.get_or_init(|| match std::env::var("KZQ_LOG").as_deref() {
        Ok("error") => Level::Error,
        Ok("info") => Level::Info,
        Ok("debug") => Level::Debug,
        _ => Level::Warn,
    })
}

pub fn log(level: Level, msg: &str) {
    if level <= threshold() {
        let tag = match level {
            Level::Error => "error",
            Level::Warn => "warn",
            Level::Info => "info",
            Level::Debug => "debug",
        };
        eprintln!("kzq [{tag}] {msg}");
    }
}

macro_rules! info {
    ($($arg:tt)*) => { crate::logging::log(crate::logging::Level::Info, &format!($($arg)*)) };
}

macro_rules! warn_log {
    ($($arg:tt)*) => { crate::logging::log(crate::logging::Level::Warn, &format!($($arg)*)) };
}

pub(crate) use info;
pub(crate) use warn_log;
