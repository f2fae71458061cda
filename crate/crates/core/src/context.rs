//! Coordinate systems on the jet manifold.
//!
//! A [`Context`] is an ordered list of named coordinates split into four
//! kinds: base coordinates (`x`, `t`), jet coordinates of the dependent
//! variable in ascending derivative order (`u0`, `u1`, ...), group
//! coordinates (`a1`, ..., `ar`), and scalar parameters (`lambda`, `q01`,
//! ...). The declaration order is the canonical monomial and differential
//! order used everywhere else in the crate, so the kinds must be declared in
//! that sequence.
//!
//! Contexts are cheap to clone (shared immutably) and support two explicit
//! compatibility mechanisms: values from a context remain valid in any
//! context that extends it by appended coordinates, and values can be
//! transported between unrelated contexts by coordinate name (see
//! [`crate::poly::ScalarPoly::transport`]).

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::Error;
use crate::Result;

/// Index of a coordinate inside its [`Context`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CoordId(pub u32);

impl CoordId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// The role a coordinate plays on the jet manifold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoordKind {
    /// Independent variable (`x`, `t`).
    Base,
    /// `order`-th spatial derivative of the dependent variable.
    Jet { order: u32 },
    /// Coordinate on the group fiber.
    Group,
    /// Spectral or expansion parameter; treated as a constant by the
    /// exterior derivative and excluded from the Grassmann basis.
    Parameter,
}

impl CoordKind {
    fn rank(self) -> u8 {
        match self {
            CoordKind::Base => 0,
            CoordKind::Jet { .. } => 1,
            CoordKind::Group => 2,
            CoordKind::Parameter => 3,
        }
    }
}

#[derive(Debug)]
struct Inner {
    coords: Vec<(String, CoordKind)>,
    index: BTreeMap<String, CoordId>,
}

/// Immutable ordered coordinate system.
#[derive(Clone)]
pub struct Context(Arc<Inner>);

impl fmt::Debug for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(self.0.coords.iter().map(|(n, _)| n))
            .finish()
    }
}

impl PartialEq for Context {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0.coords == other.0.coords
    }
}

impl Eq for Context {}

fn valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        // The `d` prefix is reserved for differentials in the text grammar.
        Some(c) if c.is_ascii_lowercase() && c != 'd' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

impl Context {
    pub fn builder() -> ContextBuilder {
        ContextBuilder { coords: Vec::new(), index: BTreeMap::new() }
    }

    /// Number of coordinates.
    pub fn len(&self) -> usize {
        self.0.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.coords.is_empty()
    }

    pub fn name(&self, id: CoordId) -> &str {
        &self.0.coords[id.index()].0
    }

    pub fn kind(&self, id: CoordId) -> CoordKind {
        self.0.coords[id.index()].1
    }

    pub fn id(&self, name: &str) -> Option<CoordId> {
        self.0.index.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<CoordId> {
        self.id(name).ok_or_else(|| Error::UnknownCoordinate(name.to_string()))
    }

    /// All coordinate ids in canonical order.
    pub fn ids(&self) -> impl Iterator<Item = CoordId> + '_ {
        (0..self.0.coords.len() as u32).map(CoordId)
    }

    /// Ids whose differentials span the Grassmann basis (everything except
    /// parameters).
    pub fn differential_ids(&self) -> impl Iterator<Item = CoordId> + '_ {
        self.ids().filter(|&id| !matches!(self.kind(id), CoordKind::Parameter))
    }

    /// Id of the jet coordinate of the given derivative order, if declared.
    pub fn jet(&self, order: u32) -> Option<CoordId> {
        self.ids().find(|&id| self.kind(id) == CoordKind::Jet { order })
    }

    /// Highest declared jet order, if any jets are declared.
    pub fn max_jet_order(&self) -> Option<u32> {
        self.0
            .coords
            .iter()
            .filter_map(|(_, k)| match k {
                CoordKind::Jet { order } => Some(*order),
                _ => None,
            })
            .max()
    }

    /// True when `self`'s coordinate list is a prefix of `other`'s, so every
    /// value formed over `self` is also valid over `other`.
    pub fn is_prefix_of(&self, other: &Context) -> bool {
        if Arc::ptr_eq(&self.0, &other.0) {
            return true;
        }
        other.0.coords.len() >= self.0.coords.len()
            && other.0.coords[..self.0.coords.len()] == self.0.coords[..]
    }

    /// The finer of two compatible contexts.
    pub fn unify(&self, other: &Context) -> Result<Context> {
        if other.is_prefix_of(self) {
            Ok(self.clone())
        } else if self.is_prefix_of(other) {
            Ok(other.clone())
        } else {
            Err(Error::ContextMismatch)
        }
    }

    /// Extension of this context by appended parameter coordinates.
    pub fn with_parameters<S: AsRef<str>>(&self, names: &[S]) -> Result<Context> {
        let mut b = self.to_builder();
        for n in names {
            b = b.parameter(n.as_ref())?;
        }
        Ok(b.build())
    }

    /// Builder preloaded with this context's coordinates.
    pub fn to_builder(&self) -> ContextBuilder {
        ContextBuilder { coords: self.0.coords.clone(), index: self.0.index.clone() }
    }
}

/// Incremental [`Context`] constructor enforcing the canonical kind order.
pub struct ContextBuilder {
    coords: Vec<(String, CoordKind)>,
    index: BTreeMap<String, CoordId>,
}

impl ContextBuilder {
    fn push(mut self, name: &str, kind: CoordKind) -> Result<Self> {
        if !valid_name(name) {
            return Err(Error::UnknownCoordinate(format!(
                "`{name}` is not a valid coordinate name (lowercase, no leading `d`)"
            )));
        }
        if self.index.contains_key(name) {
            return Err(Error::DuplicateCoordinate(name.to_string()));
        }
        if let Some((last_name, last_kind)) = self.coords.last() {
            if kind.rank() < last_kind.rank() {
                return Err(Error::CoordinateOrder(name.to_string()));
            }
            if let (CoordKind::Jet { order: prev }, CoordKind::Jet { order }) = (*last_kind, kind) {
                if order != prev + 1 {
                    return Err(Error::CoordinateOrder(format!(
                        "jet `{name}` must follow `{last_name}` with order {}",
                        prev + 1
                    )));
                }
            }
        }
        if kind == (CoordKind::Jet { order: 0 })
            && self.coords.iter().any(|(_, k)| matches!(k, CoordKind::Jet { .. }))
        {
            return Err(Error::CoordinateOrder(name.to_string()));
        }
        if let CoordKind::Jet { order } = kind {
            if order > 0 && !self.coords.iter().any(|(_, k)| *k == (CoordKind::Jet { order: order - 1 })) {
                return Err(Error::CoordinateOrder(name.to_string()));
            }
        }
        let id = CoordId(self.coords.len() as u32);
        self.index.insert(name.to_string(), id);
        self.coords.push((name.to_string(), kind));
        Ok(self)
    }

    pub fn base(self, name: &str) -> Result<Self> {
        self.push(name, CoordKind::Base)
    }

    /// Declares jets `var0 .. var{max_order}` of the dependent variable.
    pub fn jets(mut self, var: &str, max_order: u32) -> Result<Self> {
        for order in 0..=max_order {
            self = self.push(&format!("{var}{order}"), CoordKind::Jet { order })?;
        }
        Ok(self)
    }

    pub fn group(self, name: &str) -> Result<Self> {
        self.push(name, CoordKind::Group)
    }

    pub fn parameter(self, name: &str) -> Result<Self> {
        self.push(name, CoordKind::Parameter)
    }

    pub fn build(self) -> Context {
        Context(Arc::new(Inner { coords: self.coords, index: self.index }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_enforced() {
        let ctx = Context::builder()
            .base("x")
            .unwrap()
            .base("t")
            .unwrap()
            .jets("u", 1)
            .unwrap()
            .group("a1")
            .unwrap()
            .parameter("lambda")
            .unwrap()
            .build();
        assert_eq!(ctx.len(), 6);
        assert_eq!(ctx.name(CoordId(2)), "u0");
        assert_eq!(ctx.kind(CoordId(3)), CoordKind::Jet { order: 1 });
        assert_eq!(ctx.id("lambda"), Some(CoordId(5)));
        assert_eq!(ctx.differential_ids().count(), 5);

        let err = Context::builder().group("a1").unwrap().base("x");
        assert!(matches!(err, Err(Error::CoordinateOrder(_))));
    }

    #[test]
    fn jets_must_be_contiguous() {
        let b = Context::builder().base("x").unwrap();
        let err = b.push("u1", CoordKind::Jet { order: 1 });
        assert!(matches!(err, Err(Error::CoordinateOrder(_))));
    }

    #[test]
    fn names_are_validated() {
        assert!(Context::builder().base("dx").is_err());
        assert!(Context::builder().base("X").is_err());
        assert!(Context::builder().base("").is_err());
        assert!(Context::builder().base("q01").is_ok());
    }

    #[test]
    fn prefix_extension_unifies() {
        let small = Context::builder().base("x").unwrap().base("t").unwrap().build();
        let big = small.with_parameters(&["lambda"]).unwrap();
        assert!(small.is_prefix_of(&big));
        assert_eq!(small.unify(&big).unwrap(), big);

        let other = Context::builder().base("y").unwrap().build();
        assert!(matches!(small.unify(&other), Err(Error::ContextMismatch)));
    }
}
