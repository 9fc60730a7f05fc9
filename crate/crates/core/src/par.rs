//! Order-preserving map over independent work items.
//!
//! With the `parallel` feature, [`ExecMode::Parallel`] runs on rayon's pool;
//! without it every mode runs sequentially. Results are identical either way.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    Serial,
    #[default]
    Parallel,
}

impl ExecMode {
    /// Whether this build can actually run in parallel.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel
    }
}

#[cfg(feature = "parallel")]
pub fn map<T, R, F>(mode: ExecMode, items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    match mode {
        ExecMode::Parallel => items.into_par_iter().map(f).collect(),
        ExecMode::Serial => items.into_iter().map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, R, F>(_mode: ExecMode, items: Vec<T>, f: F) -> Vec<R>
where
    F: Fn(T) -> R,
{
    items.into_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let items: Vec<u64> = (0..1000).collect();
        let serial = map(ExecMode::Serial, items.clone(), |x| x * x);
        let parallel = map(ExecMode::Parallel, items, |x| x * x);
        assert_eq!(serial, parallel);
        assert_eq!(serial[999], 999 * 999);
    }
}
