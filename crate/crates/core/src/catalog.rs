//! The periodic-type exchanges used by the tests, the demo scenario and the
//! CLI. Each entry is a closed positive loop found by `search_loops` and
//! checked for replay from its eigenvector.

use crate::error::{Error, Result};
use crate::iet::PermPair;
use crate::rauzy::{build_periodic_from_loop, PeriodicIet};

#[derive(Debug, Clone)]
pub struct Instance {
    pub name: &'static str,
    /// Bottom positions of the symbols in top order (1-based).
    pub monodromy: &'static [usize],
    pub moves: &'static [usize],
    pub note: &'static str,
}

pub const INSTANCES: &[Instance] = &[
    Instance { name: "golden", monodromy: &[2, 1], moves: &[0, 1], note: "rotation by the golden mean, genus 1" },
    Instance {
        name: "rev4",
        monodromy: &[4, 3, 2, 1],
        moves: &[0, 1, 0, 1, 0, 1, 0, 1, 1, 0, 1],
        note: "genus 2, one saddle, hyperbolic",
    },
    Instance {
        name: "rev5",
        monodromy: &[5, 4, 3, 2, 1],
        moves: &[0, 1, 0, 1, 0, 0, 0, 1, 1, 0, 0, 1, 0, 1, 1, 1, 0, 1],
        note: "genus 2, two saddles, hyperbolic",
    },
    Instance {
        name: "torus3",
        monodromy: &[3, 4, 2, 1],
        moves: &[1, 0, 1, 0, 0, 1, 0, 1, 0, 0],
        note: "genus 1, three saddles; lengths satisfy rational relations",
    },
];

pub fn find(name: &str) -> Result<&'static Instance> {
    INSTANCES.iter().find(|i| i.name == name).ok_or_else(|| Error::Invalid(format!("unknown instance {name:?}")))
}

impl Instance {
    pub fn pair(&self) -> PermPair {
        PermPair::from_monodromy(self.monodromy).expect("catalog pairs are irreducible")
    }

    pub fn build(&self) -> Result<PeriodicIet> {
        build_periodic_from_loop(&self.pair(), self.moves)
    }
}

pub fn build(name: &str) -> Result<PeriodicIet> {
    find(name)?.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_instances_build() {
        for inst in INSTANCES {
            let p = inst.build().unwrap();
            assert_eq!(p.d(), inst.monodromy.len());
            assert_eq!(p.d(), 2 * p.genus() + p.saddle.kappa - 1);
        }
    }

    #[test]
    fn hyperbolic_flags() {
        assert!(build("golden").unwrap().hyperbolic());
        assert!(build("rev4").unwrap().hyperbolic());
        let r5 = build("rev5").unwrap();
        assert!(r5.hyperbolic());
        assert_eq!((r5.genus(), r5.saddle.kappa), (2, 2));
    }
}
