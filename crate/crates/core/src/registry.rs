//! Name-keyed constructors for runtime-selectable variants.

use crate::error::{Error, Result};

pub type Constructor<T> = fn() -> Box<T>;

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: Vec<(&'static str, Constructor<T>)>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: Vec::new(),
        }
    }

    /// Adds a variant. A later registration under the same name replaces
    /// the earlier one.
    pub fn register(&mut self, name: &'static str, ctor: Constructor<T>) -> &mut Self {
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = ctor,
            None => self.entries.push((name, ctor)),
        }
        self
    }

    pub fn create(&self, name: &str) -> Result<Box<T>> {
        let key = name.to_ascii_lowercase();
        self.entries
            .iter()
            .find(|(n, _)| *n == key)
            .map(|(_, ctor)| ctor())
            .ok_or_else(|| Error::UnknownName {
                kind: self.kind,
                name: name.to_string(),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Greet {
        fn hi(&self) -> &'static str;
    }
    struct A;
    struct B;
    impl Greet for A {
        fn hi(&self) -> &'static str {
            "a"
        }
    }
    impl Greet for B {
        fn hi(&self) -> &'static str {
            "b"
        }
    }

    #[test]
    fn lookup_is_case_insensitive_and_replaceable() {
        let mut reg: Registry<dyn Greet> = Registry::new("greeter");
        reg.register("x", || Box::new(A));
        assert_eq!(reg.create("X").unwrap().hi(), "a");
        reg.register("x", || Box::new(B));
        assert_eq!(reg.create("x").unwrap().hi(), "b");
        assert_eq!(reg.names(), vec!["x"]);
        assert!(matches!(
            reg.create("y"),
            Err(Error::UnknownName { kind: "greeter", .. })
        ));
    }
}
