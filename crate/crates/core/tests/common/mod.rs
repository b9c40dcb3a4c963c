#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use erl_core::clock::LogicalClock;
use erl_core::env::{load_scenarios, Environment, Scenario};
use erl_core::eval::Harness;
use erl_core::gateway::{Gateway, ScriptedBackend};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn environment() -> Environment {
    Environment::load_dir(&fixtures().join("universes")).expect("fixture universes load")
}

pub fn scenarios(env: &Environment, name: &str) -> Vec<Scenario> {
    load_scenarios(&fixtures().join("scenarios").join(name), Some(env)).expect("fixture scenarios load")
}

pub fn scripted(name: &str) -> Gateway {
    let backend = ScriptedBackend::from_path(&fixtures().join("scripts").join(name)).expect("script loads");
    Gateway::from_backend(backend)
}

pub fn harness<'a>(env: &'a Environment, script: &str) -> Harness<'a> {
    let mut h = Harness::new(env, scripted(script));
    h.clock = Arc::new(LogicalClock::default());
    h
}
