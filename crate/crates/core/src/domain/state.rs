/// Orbit-maintenance state: altitude band, fuel band and steps since the
/// last maneuver (saturating at `K`), or the absorbing deorbited state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DomainState {
    Orbit { alt: usize, fuel: usize, cooldown: usize },
    Deorbited,
}

/// Flat indexing `((cooldown * N_f + fuel) * N_a + alt)`, deorbited last.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub n_alt: usize,
    pub n_fuel: usize,
    /// Cooldown saturation `K`; cooldown takes values `0..=K`.
    pub cooldown_max: usize,
}

impl StateLayout {
    pub fn num_states(&self) -> usize {
        self.n_alt * self.n_fuel * (self.cooldown_max + 1) + 1
    }

    pub fn deorbited_index(&self) -> usize {
        self.num_states() - 1
    }

    pub fn encode(&self, s: DomainState) -> usize {
        match s {
            DomainState::Deorbited => self.deorbited_index(),
            DomainState::Orbit { alt, fuel, cooldown } => {
                debug_assert!(alt < self.n_alt && fuel < self.n_fuel && cooldown <= self.cooldown_max);
                (cooldown * self.n_fuel + fuel) * self.n_alt + alt
            }
        }
    }

    pub fn decode(&self, index: usize) -> DomainState {
        debug_assert!(index < self.num_states());
        if index == self.deorbited_index() {
            return DomainState::Deorbited;
        }
        let alt = index % self.n_alt;
        let rest = index / self.n_alt;
        DomainState::Orbit { alt, fuel: rest % self.n_fuel, cooldown: rest / self.n_fuel }
    }

    /// Index of `(cooldown, fuel, alt = 0)`.
    pub fn base(&self, cooldown: usize, fuel: usize) -> usize {
        (cooldown * self.n_fuel + fuel) * self.n_alt
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_and_full_sizes() {
        assert_eq!(StateLayout { n_alt: 4, n_fuel: 2, cooldown_max: 1 }.num_states(), 17);
        assert_eq!(StateLayout { n_alt: 1500, n_fuel: 500, cooldown_max: 3 }.num_states(), 3_000_001);
    }

    #[test]
    fn encoding_is_a_bijection() {
        let l = StateLayout { n_alt: 5, n_fuel: 3, cooldown_max: 2 };
        let mut seen = vec![false; l.num_states()];
        for c in 0..=2 {
            for f in 0..3 {
                for a in 0..5 {
                    let s = DomainState::Orbit { alt: a, fuel: f, cooldown: c };
                    let i = l.encode(s);
                    assert!(!seen[i]);
                    seen[i] = true;
                    assert_eq!(l.decode(i), s);
                }
            }
        }
        assert!(!seen[l.deorbited_index()]);
        assert_eq!(l.decode(l.deorbited_index()), DomainState::Deorbited);
        assert_eq!(l.encode(DomainState::Deorbited), l.num_states() - 1);
    }
}
