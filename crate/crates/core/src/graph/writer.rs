use std::sync::Arc;

use super::MirrorGraph;

/// Immutable view of the graph at one version. Cheap to clone and `Send + Sync`.
pub type Snapshot = Arc<MirrorGraph>;

/// Single-writer owner of a graph.
///
/// Mutations run against a private copy and are published atomically when
/// the closure succeeds; a failing closure leaves the published graph
/// untouched. Readers hold [`Snapshot`]s that never change under them.
#[derive(Debug, Clone)]
pub struct GraphWriter {
    current: Snapshot,
}

impl GraphWriter {
    pub fn new(graph: MirrorGraph) -> Self {
        Self {
            current: Arc::new(graph),
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        Arc::clone(&self.current)
    }

    pub fn version(&self) -> u64 {
        self.current.version()
    }

    pub fn apply<R, E>(&mut self, mutate: impl FnOnce(&mut MirrorGraph) -> Result<R, E>) -> Result<R, E> {
        let mut next = (*self.current).clone();
        let out = mutate(&mut next)?;
        debug_assert!(next.check_integrity().is_ok());
        if next.version() != self.current.version() {
            self.current = Arc::new(next);
        }
        Ok(out)
    }
}
