//! Name-keyed registries of interchangeable strategies.
//!
//! Each family (volatility laws, noise models, decay curves, standardization
//! rules) is a trait; implementations register a constructor under a name and
//! are built at runtime from a JSON parameter object.

use std::collections::BTreeMap;
use std::fmt;

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RegistryError {
    #[error("unknown {family} `{name}` (available: {available})")]
    Unknown { family: &'static str, name: String, available: String },
    #[error("invalid parameters for {family} `{name}`: {reason}")]
    InvalidParams { family: &'static str, name: String, reason: String },
}

pub type Constructor<T> = fn(&Value) -> Result<Box<T>, String>;

pub struct Registry<T: ?Sized> {
    family: &'static str,
    entries: BTreeMap<&'static str, Constructor<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(family: &'static str) -> Self {
        Self { family, entries: BTreeMap::new() }
    }

    pub fn register(&mut self, name: &'static str, ctor: Constructor<T>) -> &mut Self {
        self.entries.insert(name, ctor);
        self
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name.to_ascii_lowercase().as_str())
    }

    /// Builds the strategy registered under `name` (case-insensitive).
    pub fn build(&self, name: &str, params: &Value) -> Result<Box<T>, RegistryError> {
        let key = name.to_ascii_lowercase();
        let ctor = self.entries.get(key.as_str()).ok_or_else(|| RegistryError::Unknown {
            family: self.family,
            name: name.to_string(),
            available: self.names().collect::<Vec<_>>().join(", "),
        })?;
        ctor(params).map_err(|reason| RegistryError::InvalidParams { family: self.family, name: key, reason })
    }
}

impl<T: ?Sized> fmt::Debug for Registry<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry").field("family", &self.family).field("entries", &self.entries.keys()).finish()
    }
}

/// Reads a numeric field from a parameter object.
pub fn param_f64(params: &Value, key: &str) -> Result<f64, String> {
    params.get(key).and_then(Value::as_f64).ok_or_else(|| format!("missing numeric `{key}`"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    trait Greeter {
        fn greet(&self) -> String;
    }

    struct Hello(String);

    impl Greeter for Hello {
        fn greet(&self) -> String {
            format!("hello {}", self.0)
        }
    }

    fn hello(p: &Value) -> Result<Box<dyn Greeter>, String> {
        let who = p.get("who").and_then(Value::as_str).ok_or("missing `who`")?;
        Ok(Box::new(Hello(who.to_string())))
    }

    #[test]
    fn build_by_name() {
        let mut r: Registry<dyn Greeter> = Registry::new("greeter");
        r.register("hello", hello);
        assert_eq!(r.build("HELLO", &json!({"who": "ms"})).unwrap().greet(), "hello ms");
        assert!(matches!(r.build("bye", &json!({})), Err(RegistryError::Unknown { .. })));
        assert!(matches!(r.build("hello", &json!({})), Err(RegistryError::InvalidParams { .. })));
        assert_eq!(r.names().collect::<Vec<_>>(), ["hello"]);
    }
}
