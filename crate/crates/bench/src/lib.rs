//! Fixed instances shared by the benchmarks.

use netsynth::analysis::Method;
use netsynth::generator::fig4_fixture;
use netsynth::graph::Topology;
use netsynth::report::{instance_for, Instance};

pub const SEED: u64 = 7;

/// Ring instance suited to `method`.
pub fn ring(method: Method, n: usize) -> Instance {
    let topo = Topology::ring(n).expect("ring sizes are at least two");
    instance_for(method, topo, 1, SEED).expect("benchmark instance")
}

pub fn benchmark() -> Instance {
    let (system, controller_topology) = fig4_fixture();
    Instance {
        system,
        controller_topology,
        classes: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_build() {
        assert_eq!(ring(Method::Homogeneous, 6).system.n(), 6);
        assert!(ring(Method::AlphaBeta, 4).classes.is_some());
        assert_eq!(benchmark().system.n(), 8);
    }
}
