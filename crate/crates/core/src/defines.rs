//! Compile-time defines.
//!
//! Host code fixes kernel parameters (stencil radius, grid extents, step
//! sizes) before a kernel is built. The lexer substitutes them while
//! tokenizing, one pass, no rescanning, so a define can never expand into
//! another define.

use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub enum DefineValue {
    Int(i64),
    Float(f64),
    /// Bare identifier, e.g. mapping a type alias `datafloat` to `double`.
    Ident(String),
}

impl fmt::Display for DefineValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DefineValue::Int(v) => write!(f, "{v}"),
            // {:?} round-trips f64 exactly and always keeps a `.` or exponent,
            // so the emitted literal re-reads as a double.
            DefineValue::Float(v) => write!(f, "{v:?}"),
            DefineValue::Ident(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DefineError {
    #[error("define name {0:?} is not a valid identifier")]
    BadName(String),
    #[error("define {0:?} maps to itself")]
    SelfReference(String),
    #[error("define value {0:?} is not a valid identifier")]
    BadValue(String),
    #[error("define {0:?} must be finite")]
    NonFinite(String),
}

/// Ordered name -> value map. Insertion order is preserved (re-adding a name
/// updates it in place), so emitted `#define` directives are stable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DefineSet {
    entries: Vec<(String, DefineValue)>,
}

pub(crate) fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl DefineSet {
    pub fn new() -> DefineSet {
        DefineSet::default()
    }

    pub fn add(&mut self, name: &str, value: DefineValue) -> Result<(), DefineError> {
        if !is_ident(name) {
            return Err(DefineError::BadName(name.to_string()));
        }
        match &value {
            DefineValue::Ident(target) => {
                if !is_ident(target) {
                    return Err(DefineError::BadValue(target.clone()));
                }
                if target == name {
                    return Err(DefineError::SelfReference(name.to_string()));
                }
            }
            DefineValue::Float(v) if !v.is_finite() => {
                return Err(DefineError::NonFinite(name.to_string()));
            }
            _ => {}
        }
        match self.entries.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((name.to_string(), value)),
        }
        Ok(())
    }

    pub fn add_int(&mut self, name: &str, v: i64) -> Result<(), DefineError> {
        self.add(name, DefineValue::Int(v))
    }

    pub fn add_float(&mut self, name: &str, v: f64) -> Result<(), DefineError> {
        self.add(name, DefineValue::Float(v))
    }

    pub fn add_ident(&mut self, name: &str, target: &str) -> Result<(), DefineError> {
        self.add(name, DefineValue::Ident(target.to_string()))
    }

    pub fn get(&self, name: &str) -> Option<&DefineValue> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DefineValue)> {
        self.entries.iter().map(|(n, v)| (n.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_insertion_order_and_updates_in_place() {
        let mut d = DefineSet::new();
        d.add_int("r", 3).unwrap();
        d.add_int("w", 64).unwrap();
        d.add_int("r", 7).unwrap();
        let names: Vec<&str> = d.iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["r", "w"]);
        assert_eq!(d.get("r"), Some(&DefineValue::Int(7)));
    }

    #[test]
    fn rejects_bad_names_and_self_reference() {
        let mut d = DefineSet::new();
        assert!(d.add_int("2x", 1).is_err());
        assert!(d.add_ident("t", "t").is_err());
        assert!(d.add_ident("t", "7bad").is_err());
    }

    #[test]
    fn float_rendering_round_trips() {
        assert_eq!(DefineValue::Float(0.1).to_string(), "0.1");
        assert_eq!(DefineValue::Float(2.0).to_string(), "2.0");
        assert_eq!(DefineValue::Float(1e-9).to_string(), "1e-9");
    }
}
