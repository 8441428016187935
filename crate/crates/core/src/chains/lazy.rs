//! Sets built as unions without copying; flattened on demand.

use std::hash::Hash;
use std::sync::Arc;

use rustc_hash::FxHashSet;

struct Node<T> {
    items: Vec<T>,
    parts: Vec<LazySet<T>>,
}

/// A set represented as a DAG of unions. A present node is never empty.
pub struct LazySet<T>(Option<Arc<Node<T>>>);

impl<T> Clone for LazySet<T> {
    fn clone(&self) -> Self {
        LazySet(self.0.clone())
    }
}

impl<T> Default for LazySet<T> {
    fn default() -> Self {
        LazySet(None)
    }
}

impl<T: Clone + Eq + Hash + Ord> LazySet<T> {
    pub fn empty() -> Self {
        LazySet(None)
    }

    pub fn from_vec(items: Vec<T>) -> Self {
        if items.is_empty() {
            LazySet(None)
        } else {
            LazySet(Some(Arc::new(Node { items, parts: Vec::new() })))
        }
    }

    pub fn union(parts: Vec<LazySet<T>>) -> Self {
        Self::union_with(parts, Vec::new())
    }

    pub fn union_with(parts: Vec<LazySet<T>>, items: Vec<T>) -> Self {
        let mut parts: Vec<LazySet<T>> = parts.into_iter().filter(|p| !p.is_empty()).collect();
        if items.is_empty() {
            match parts.len() {
                0 => return LazySet(None),
                1 => return parts.pop().expect("one part"),
                _ => {}
            }
        }
        if parts.is_empty() && items.is_empty() {
            return LazySet(None);
        }
        LazySet(Some(Arc::new(Node { items, parts })))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_none()
    }

    /// Distinct elements, sorted.
    pub fn flatten(&self) -> Vec<T> {
        let Some(root) = &self.0 else { return Vec::new() };
        if root.parts.is_empty() {
            let mut v = root.items.clone();
            v.sort();
            v.dedup();
            return v;
        }
        let mut seen: FxHashSet<*const Node<T>> = FxHashSet::default();
        let mut out: FxHashSet<T> = FxHashSet::default();
        let mut stack: Vec<&Arc<Node<T>>> = vec![root];
        while let Some(n) = stack.pop() {
            if !seen.insert(Arc::as_ptr(n)) {
                continue;
            }
            out.extend(n.items.iter().cloned());
            for p in &n.parts {
                if let Some(c) = &p.0 {
                    stack.push(c);
                }
            }
        }
        let mut v: Vec<T> = out.into_iter().collect();
        v.sort();
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unions_share_and_flatten() {
        let a = LazySet::from_vec(vec![3, 1]);
        let b = LazySet::from_vec(vec![2, 3]);
        let u = LazySet::union(vec![a.clone(), b, LazySet::empty(), a]);
        assert_eq!(u.flatten(), vec![1, 2, 3]);
        assert!(LazySet::<u8>::union(vec![LazySet::empty()]).is_empty());
    }
}
