use std::collections::HashMap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MapError {
    #[error("unknown map {0:?}")]
    UnknownMap(String),
    #[error("map {map:?} expects {expected}-octet {what}, got {got}")]
    WidthMismatch {
        map: String,
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("map {0:?} redeclared with different widths")]
    Conflict(String),
}

/// Declaration of a fixed-width key/value map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapSpec {
    pub name: String,
    pub key_width: usize,
    pub value_width: usize,
}

impl MapSpec {
    pub fn new(name: impl Into<String>, key_width: usize, value_width: usize) -> Self {
        MapSpec {
            name: name.into(),
            key_width,
            value_width,
        }
    }
}

#[derive(Debug, Clone)]
struct Map {
    spec: MapSpec,
    entries: HashMap<Vec<u8>, Vec<u8>>,
}

/// Named maps of one node. State outlives individual program runs.
#[derive(Debug, Clone, Default)]
pub struct MapStore {
    maps: HashMap<String, Map>,
}

impl MapStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Creates the map if absent. Redeclaring with identical widths is a
    /// no-op so that one program may be bound several times.
    pub fn declare(&mut self, spec: MapSpec) -> Result<(), MapError> {
        match self.maps.get(&spec.name) {
            Some(m) if m.spec == spec => Ok(()),
            Some(_) => Err(MapError::Conflict(spec.name)),
            None => {
                self.maps.insert(
                    spec.name.clone(),
                    Map {
                        spec,
                        entries: HashMap::new(),
                    },
                );
                Ok(())
            }
        }
    }

    pub fn get(&self, map: &str, key: &[u8]) -> Result<Option<&[u8]>, MapError> {
        let m = self.map(map)?;
        check(&m.spec, "key", m.spec.key_width, key.len())?;
        Ok(m.entries.get(key).map(Vec::as_slice))
    }

    pub fn put(&mut self, map: &str, key: &[u8], value: &[u8]) -> Result<(), MapError> {
        let m = self
            .maps
            .get_mut(map)
            .ok_or_else(|| MapError::UnknownMap(map.to_string()))?;
        check(&m.spec, "key", m.spec.key_width, key.len())?;
        check(&m.spec, "value", m.spec.value_width, value.len())?;
        m.entries.insert(key.to_vec(), value.to_vec());
        Ok(())
    }

    pub fn len(&self, map: &str) -> Result<usize, MapError> {
        Ok(self.map(map)?.entries.len())
    }

    fn map(&self, name: &str) -> Result<&Map, MapError> {
        self.maps
            .get(name)
            .ok_or_else(|| MapError::UnknownMap(name.to_string()))
    }
}

fn check(spec: &MapSpec, what: &'static str, expected: usize, got: usize) -> Result<(), MapError> {
    if expected == got {
        Ok(())
    } else {
        Err(MapError::WidthMismatch {
            map: spec.name.clone(),
            what,
            expected,
            got,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn put_get_and_widths() {
        let mut s = MapStore::new();
        s.declare(MapSpec::new("m", 4, 8)).unwrap();
        assert_eq!(s.get("m", &[0; 4]).unwrap(), None);
        s.put("m", &[0; 4], &[1; 8]).unwrap();
        assert_eq!(s.get("m", &[0; 4]).unwrap(), Some(&[1u8; 8][..]));
        assert!(matches!(s.put("m", &[0; 3], &[1; 8]), Err(MapError::WidthMismatch { what: "key", .. })));
        assert!(matches!(s.put("m", &[0; 4], &[1; 7]), Err(MapError::WidthMismatch { what: "value", .. })));
        assert_eq!(s.get("x", &[]), Err(MapError::UnknownMap("x".into())));
        s.declare(MapSpec::new("m", 4, 8)).unwrap();
        assert_eq!(s.declare(MapSpec::new("m", 4, 4)), Err(MapError::Conflict("m".into())));
    }
}
