//! Atomic publication of immutable parameter snapshots.
//!
//! Serving reads whole-value snapshots behind an `Arc`; publication
//! swaps the pointer, so a reader sees either the previous snapshot or
//! the new one, never a mix. The slot is the only thing serving and
//! training share.

use crate::qnet::NetworkParams;
use std::sync::{Arc, RwLock};

/// An immutable parameter copy stamped with its version. The stamp
/// duplicates `params.version()` so readers can verify they never
/// observed a torn publication.
#[derive(Debug)]
pub struct Snapshot {
    pub version: u64,
    pub params: NetworkParams,
}

impl Snapshot {
    /// True when the outer stamp matches the inner parameter version.
    pub fn consistent(&self) -> bool {
        self.version == self.params.version()
    }
}

/// Single-writer, many-reader snapshot cell.
pub struct SnapshotSlot {
    inner: RwLock<Arc<Snapshot>>,
}

impl SnapshotSlot {
    pub fn new(params: &NetworkParams) -> SnapshotSlot {
        SnapshotSlot {
            inner: RwLock::new(Arc::new(Snapshot {
                version: params.version(),
                params: params.clone(),
            })),
        }
    }

    /// Publish a fresh copy of `params`. All-or-nothing: the swap is a
    /// single pointer store under the lock.
    pub fn publish(&self, params: &NetworkParams) {
        let snap = Arc::new(Snapshot { version: params.version(), params: params.clone() });
        *self.inner.write().unwrap() = snap;
    }

    /// The latest published snapshot; never blocks on training work,
    /// only on the pointer swap itself.
    pub fn latest(&self) -> Arc<Snapshot> {
        self.inner.read().unwrap().clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qnet::{ConvSpec, NetSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_params() -> NetworkParams {
        let spec = NetSpec {
            input_len: 20,
            input_width: 8,
            convs: vec![ConvSpec { kernel: 3, out_ch: 2, pool: 2 }],
            hidden_dim: 4,
            action_count: 3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        NetworkParams::init(spec, &mut rng).unwrap()
    }

    #[test]
    fn snapshots_are_immutable_values() {
        let mut params = small_params();
        let slot = SnapshotSlot::new(&params);
        let before = slot.latest();
        params.update_in_place(|d| d[0] += 1.0);
        // The already-taken snapshot is untouched by the mutation.
        assert_ne!(before.params.data()[0], params.data()[0]);
        assert!(before.consistent());

        slot.publish(&params);
        let after = slot.latest();
        assert_eq!(after.version, params.version());
        assert!(after.consistent());
        // The old handle still reads the old values.
        assert_ne!(before.version, after.version);
    }

    #[test]
    fn readers_see_whole_versions_under_concurrent_publishes() {
        use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
        use std::sync::Arc as StdArc;

        let mut params = small_params();
        let slot = StdArc::new(SnapshotSlot::new(&params));
        let stop = StdArc::new(AtomicBool::new(false));
        let published = StdArc::new(AtomicU64::new(params.version()));

        let publisher = {
            let slot = StdArc::clone(&slot);
            let stop = StdArc::clone(&stop);
            let published = StdArc::clone(&published);
            std::thread::spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    params.update_in_place(|d| d[0] += 0.5);
                    slot.publish(&params);
                    published.store(params.version(), Ordering::Relaxed);
                }
                params.version()
            })
        };

        let readers: Vec<_> = (0..2)
            .map(|_| {
                let slot = StdArc::clone(&slot);
                std::thread::spawn(move || {
                    for _ in 0..20_000 {
                        let s = slot.latest();
                        assert!(s.consistent(), "torn snapshot observed");
                    }
                })
            })
            .collect();
        for r in readers {
            r.join().unwrap();
        }
        stop.store(true, Ordering::Relaxed);
        let final_version = publisher.join().unwrap();
        assert_eq!(slot.latest().version, final_version);
        assert!(final_version > 0);
    }
}
