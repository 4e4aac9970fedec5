//! Bundled IEEE test cases in MATPOWER format.

pub const CASE30: &str = include_str!("../data/case30.m");
pub const CASE118: &str = include_str!("../data/case118.m");

/// Look up a bundled case by name (`case30`, `case118`).
pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "case30" => Some(CASE30),
        "case118" => Some(CASE118),
        _ => None,
    }
}
