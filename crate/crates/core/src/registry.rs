//! Name-keyed constructors for interchangeable strategies.
//!
//! Time steppers, error metrics and observables are each a trait with
//! several implementations; configs and the CLI pick one by name.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

pub type Builder<T, C> = fn(&C) -> Result<Box<T>>;

pub struct Registry<T: ?Sized, C: ?Sized> {
    kind: &'static str,
    builders: BTreeMap<&'static str, Builder<T, C>>,
    aliases: BTreeMap<&'static str, &'static str>,
}

impl<T: ?Sized, C: ?Sized> Registry<T, C> {
    pub fn new(kind: &'static str) -> Self {
        Registry {
            kind,
            builders: BTreeMap::new(),
            aliases: BTreeMap::new(),
        }
    }

    pub fn register(mut self, name: &'static str, builder: Builder<T, C>) -> Self {
        self.builders.insert(name, builder);
        self
    }

    pub fn alias(mut self, alias: &'static str, name: &'static str) -> Self {
        debug_assert!(self.builders.contains_key(name), "alias to unknown entry {name}");
        self.aliases.insert(alias, name);
        self
    }

    /// Canonical name for `name`, resolving aliases.
    pub fn resolve(&self, name: &str) -> Result<&'static str> {
        if let Some((&k, _)) = self.builders.get_key_value(name) {
            return Ok(k);
        }
        if let Some(&k) = self.aliases.get(name) {
            return Ok(k);
        }
        Err(Error::config(
            self.kind,
            format!("unknown {} '{name}'; known: {}", self.kind, self.names().join(", ")),
        ))
    }

    pub fn build(&self, name: &str, config: &C) -> Result<Box<T>> {
        let key = self.resolve(name)?;
        (self.builders[key])(config)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.resolve(name).is_ok()
    }

    /// Canonical names in sorted order.
    pub fn names(&self) -> Vec<&'static str> {
        self.builders.keys().copied().collect()
    }
}

impl<T: ?Sized, C: ?Sized> fmt::Debug for Registry<T, C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("kind", &self.kind)
            .field("names", &self.names())
            .field("aliases", &self.aliases)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Shape {
        fn sides(&self) -> u32;
    }
    struct Tri;
    struct Quad(u32);
    impl Shape for Tri {
        fn sides(&self) -> u32 {
            3
        }
    }
    impl Shape for Quad {
        fn sides(&self) -> u32 {
            4 + self.0
        }
    }

    fn tri(_: &u32) -> Result<Box<dyn Shape>> {
        Ok(Box::new(Tri))
    }
    fn quad(extra: &u32) -> Result<Box<dyn Shape>> {
        Ok(Box::new(Quad(*extra)))
    }

    fn shapes() -> Registry<dyn Shape, u32> {
        Registry::new("shape")
            .register("triangle", tri)
            .register("quad", quad)
            .alias("square", "quad")
    }

    #[test]
    fn builds_by_name_and_alias() {
        let r = shapes();
        assert_eq!(r.build("triangle", &0).unwrap().sides(), 3);
        assert_eq!(r.build("square", &2).unwrap().sides(), 6);
        assert_eq!(r.resolve("square").unwrap(), "quad");
        assert_eq!(r.names(), vec!["quad", "triangle"]);
    }

    #[test]
    fn unknown_names_list_the_options() {
        let msg = shapes().build("hexagon", &0).err().unwrap().to_string();
        assert!(msg.contains("hexagon") && msg.contains("quad, triangle"), "{msg}");
    }
}
