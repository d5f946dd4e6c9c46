//! Constraint labels and a small violation set.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Constraint {
    /// PAP energy causality.
    C1,
    /// SAP energy causality, counting same-slot harvest.
    C2,
    /// PAP battery overflow.
    C3,
    /// SAP battery overflow.
    C4,
    /// PUE minimum rate.
    C5,
    /// PAP power limit.
    C6,
    /// SAP power limit.
    C7,
}

impl Constraint {
    pub const ALL: [Constraint; 7] = [
        Constraint::C1,
        Constraint::C2,
        Constraint::C3,
        Constraint::C4,
        Constraint::C5,
        Constraint::C6,
        Constraint::C7,
    ];

    pub const PAP: [Constraint; 3] = [Constraint::C1, Constraint::C3, Constraint::C6];
    pub const SAP: [Constraint; 3] = [Constraint::C2, Constraint::C4, Constraint::C7];

    pub fn index(self) -> usize {
        self as usize
    }

    fn bit(self) -> u8 {
        1 << self.index()
    }
}

impl std::fmt::Display for Constraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "C{}", self.index() + 1)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Violations(u8);

impl Violations {
    pub fn none() -> Self {
        Self(0)
    }

    pub fn of(constraints: &[Constraint]) -> Self {
        let mut v = Self::none();
        for c in constraints {
            v.insert(*c);
        }
        v
    }

    pub fn insert(&mut self, c: Constraint) {
        self.0 |= c.bit();
    }

    pub fn set(&mut self, c: Constraint, violated: bool) {
        if violated {
            self.insert(c);
        }
    }

    pub fn contains(&self, c: Constraint) -> bool {
        self.0 & c.bit() != 0
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn union(self, other: Self) -> Self {
        Self(self.0 | other.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = Constraint> + '_ {
        Constraint::ALL.into_iter().filter(|c| self.contains(*c))
    }

    /// Per-agent penalties `(pap, sap)`, `-kappa` for each violated constraint
    /// owned by that agent. The PUE rate constraint is charged to both.
    pub fn penalties(&self, kappa: f64) -> (f64, f64) {
        let count = |set: &[Constraint]| set.iter().filter(|c| self.contains(**c)).count() as f64;
        let shared = if self.contains(Constraint::C5) { 1.0 } else { 0.0 };
        (
            -kappa * (count(&Constraint::PAP) + shared),
            -kappa * (count(&Constraint::SAP) + shared),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn penalty_attribution() {
        assert_eq!(Violations::none().penalties(1.0), (0.0, 0.0));
        assert_eq!(Violations::of(&[Constraint::C1]).penalties(1.0), (-1.0, 0.0));
        assert_eq!(Violations::of(&[Constraint::C5]).penalties(1.0), (-1.0, -1.0));
        assert_eq!(
            Violations::of(&[Constraint::C2, Constraint::C4, Constraint::C3]).penalties(0.5),
            (-0.5, -1.0)
        );
    }

    #[test]
    fn set_operations() {
        let mut v = Violations::none();
        assert!(v.is_empty());
        v.set(Constraint::C7, true);
        v.set(Constraint::C2, false);
        assert!(v.contains(Constraint::C7));
        assert!(!v.contains(Constraint::C2));
        assert_eq!(v.len(), 1);
        let w = v.union(Violations::of(&[Constraint::C1]));
        assert_eq!(w.iter().collect::<Vec<_>>(), vec![Constraint::C1, Constraint::C7]);
        assert_eq!(Constraint::C4.to_string(), "C4");
    }
}
