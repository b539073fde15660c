//! Name-keyed registries of strategy factories.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

type Factory<T, A> = Box<dyn Fn(&A) -> Result<Box<T>> + Send + Sync>;

struct Entry<T: ?Sized, A> {
    description: &'static str,
    factory: Factory<T, A>,
}

/// Maps strategy names to constructors taking shared arguments `A`.
pub struct Registry<T: ?Sized, A> {
    kind: &'static str,
    entries: BTreeMap<String, Entry<T, A>>,
}

impl<T: ?Sized, A> Registry<T, A> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    /// Adds or replaces a strategy.
    pub fn register<F>(&mut self, name: &str, description: &'static str, factory: F)
    where
        F: Fn(&A) -> Result<Box<T>> + Send + Sync + 'static,
    {
        self.entries.insert(
            name.to_string(),
            Entry {
                description,
                factory: Box::new(factory),
            },
        );
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn describe(&self) -> Vec<(String, &'static str)> {
        self.entries.iter().map(|(k, e)| (k.clone(), e.description)).collect()
    }

    pub fn create(&self, name: &str, args: &A) -> Result<Box<T>> {
        match self.entries.get(name) {
            Some(e) => (e.factory)(args),
            None => Err(Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().join(", "),
            }),
        }
    }
}
