//! Structural type registry used by cast checks.
//!
//! Types are either primitives (a size) or aggregates (ordered,
//! non-overlapping fields). Registration is append-only and fields may only
//! name types that already exist, so the registry has no cycles.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TypeId(pub u32);

impl fmt::Display for TypeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("type `{0}` is already defined")]
    Duplicate(String),
    #[error("unknown type {0}")]
    UnknownId(TypeId),
    #[error("unknown type `{0}`")]
    UnknownName(String),
    #[error("type `{name}`: {reason}")]
    Definition { name: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TypeKind {
    Primitive,
    Aggregate { fields: Vec<(u64, TypeId)> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeDescriptor {
    pub name: String,
    pub kind: TypeKind,
    pub total_size: u64,
}

impl TypeDescriptor {
    pub fn primitive(name: impl Into<String>, size: u64) -> Self {
        Self {
            name: name.into(),
            kind: TypeKind::Primitive,
            total_size: size,
        }
    }

    pub fn aggregate(name: impl Into<String>, total_size: u64, fields: Vec<(u64, TypeId)>) -> Self {
        Self {
            name: name.into(),
            kind: TypeKind::Aggregate { fields },
            total_size,
        }
    }
}

/// (offset, size) of a primitive leaf in a flattened layout.
type Leaf = (u64, u64);

#[derive(Debug, Clone)]
pub struct TypeRegistry {
    types: Vec<TypeDescriptor>,
    leaves: Vec<Vec<Leaf>>,
    by_name: HashMap<String, TypeId>,
}

impl TypeRegistry {
    pub const BUILTINS: [(&'static str, u64); 6] = [
        ("byte", 1),
        ("int16", 2),
        ("int32", 4),
        ("int64", 8),
        ("float32", 4),
        ("float64", 8),
    ];

    pub fn empty() -> Self {
        Self {
            types: Vec::new(),
            leaves: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    /// Registry pre-populated with [`Self::BUILTINS`]; `byte` is id 0.
    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        for (name, size) in Self::BUILTINS {
            reg.register(TypeDescriptor::primitive(name, size)).unwrap();
        }
        reg
    }

    pub fn byte(&self) -> Option<TypeId> {
        self.id("byte")
    }

    pub fn register(&mut self, desc: TypeDescriptor) -> Result<TypeId, TypeError> {
        if self.by_name.contains_key(&desc.name) {
            return Err(TypeError::Duplicate(desc.name));
        }
        let bad = |reason: String| TypeError::Definition {
            name: desc.name.clone(),
            reason,
        };
        if desc.total_size == 0 {
            return Err(bad("size must be at least 1".into()));
        }
        let leaves = match &desc.kind {
            TypeKind::Primitive => vec![(0, desc.total_size)],
            TypeKind::Aggregate { fields } => {
                if fields.is_empty() {
                    return Err(bad("aggregate has no fields".into()));
                }
                let mut leaves = Vec::new();
                let mut next_free = 0u64;
                for &(offset, ty) in fields {
                    let field = self.get(ty)?;
                    if offset < next_free {
                        return Err(bad(format!(
                            "field at offset {offset} overlaps or is out of order"
                        )));
                    }
                    let end = offset + field.total_size;
                    if end > desc.total_size {
                        return Err(bad(format!(
                            "field at offset {offset} of size {} exceeds total size {}",
                            field.total_size, desc.total_size
                        )));
                    }
                    leaves.extend(self.leaves[ty.0 as usize].iter().map(|&(o, s)| (o + offset, s)));
                    next_free = end;
                }
                leaves
            }
        };
        let id = TypeId(self.types.len() as u32);
        self.by_name.insert(desc.name.clone(), id);
        self.types.push(desc);
        self.leaves.push(leaves);
        Ok(id)
    }

    pub fn get(&self, id: TypeId) -> Result<&TypeDescriptor, TypeError> {
        self.types.get(id.0 as usize).ok_or(TypeError::UnknownId(id))
    }

    pub fn id(&self, name: &str) -> Option<TypeId> {
        self.by_name.get(name).copied()
    }

    pub fn lookup(&self, name: &str) -> Result<TypeId, TypeError> {
        self.id(name).ok_or_else(|| TypeError::UnknownName(name.to_string()))
    }

    pub fn size_of(&self, id: TypeId) -> Result<u64, TypeError> {
        Ok(self.get(id)?.total_size)
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = TypeId> {
        (0..self.types.len() as u32).map(TypeId)
    }

    /// Type that begins exactly at `offset` inside `t`: `t` itself at 0,
    /// otherwise found by descending into the field covering `offset`.
    pub fn type_at_offset(&self, t: TypeId, offset: u64) -> Option<TypeId> {
        if offset == 0 {
            return Some(t);
        }
        let desc = self.get(t).ok()?;
        let TypeKind::Aggregate { fields } = &desc.kind else {
            return None;
        };
        fields
            .iter()
            .find(|&&(off, ty)| {
                let size = self.types[ty.0 as usize].total_size;
                off <= offset && offset < off + size
            })
            .and_then(|&(off, ty)| self.type_at_offset(ty, offset - off))
    }

    /// A value of type `found` may be viewed as `target` when they are the
    /// same type, or when `target`'s primitive layout is a prefix of
    /// `found`'s and `target` is no larger. Two primitives of equal size
    /// satisfy the prefix rule trivially.
    pub fn cast_compatible(&self, found: TypeId, target: TypeId) -> bool {
        if found == target {
            return true;
        }
        let (Ok(f), Ok(t)) = (self.get(found), self.get(target)) else {
            return false;
        };
        let fl = &self.leaves[found.0 as usize];
        let tl = &self.leaves[target.0 as usize];
        t.total_size <= f.total_size && tl.len() <= fl.len() && fl[..tl.len()] == tl[..]
    }
}

impl Default for TypeRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}
