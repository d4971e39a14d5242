//! Union-find with path halving and union by size.

pub struct Dsu {
    parent: Vec<u32>,
    size: Vec<u32>,
    components: usize,
}

impl Dsu {
    pub fn new(n: usize) -> Self {
        Dsu {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
            components: n,
        }
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    /// Returns true if the two elements were in different sets.
    pub fn union(&mut self, a: u32, b: u32) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
        self.components -= 1;
        true
    }

    pub fn same(&mut self, a: u32, b: u32) -> bool {
        self.find(a) == self.find(b)
    }

    pub fn components(&self) -> usize {
        self.components
    }

    /// Minimum member of each component, ascending.
    pub fn representatives(&mut self) -> Vec<u32> {
        let n = self.parent.len();
        let mut min_of_root = vec![u32::MAX; n];
        for x in 0..n as u32 {
            let r = self.find(x) as usize;
            if x < min_of_root[r] {
                min_of_root[r] = x;
            }
        }
        let mut reps: Vec<u32> = min_of_root.into_iter().filter(|&m| m != u32::MAX).collect();
        reps.sort_unstable();
        reps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn union_merges_components() {
        let mut d = Dsu::new(4);
        assert_eq!(d.components(), 4);
        assert!(d.union(0, 1));
        assert!(!d.union(1, 0));
        assert!(d.union(2, 3));
        assert_eq!(d.components(), 2);
        assert!(d.same(0, 1));
        assert!(!d.same(1, 2));
    }

    #[test]
    fn representatives_are_component_minima() {
        let mut d = Dsu::new(5);
        d.union(3, 1);
        d.union(4, 2);
        assert_eq!(d.representatives(), vec![0, 1, 2]);
    }
}
