//! Creator → created lineage built from CREATE internal transactions, and
//! expansion of a malicious seed set over that lineage.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::data::{AccountKind, Address, DataStore, Opcode};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("{created} has more than one creator ({first} and {second})")]
    MultipleCreators { created: Address, first: Address, second: Address },
}

/// Directed CREATE graph. Each created contract has at most one creator.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CreateGraph {
    children: BTreeMap<Address, BTreeSet<Address>>,
    parent: BTreeMap<Address, Address>,
}

impl CreateGraph {
    /// Builds from `(creator, created)` pairs. A repeated identical pair is a
    /// single edge; a second, different creator is an error.
    pub fn from_edges(edges: impl IntoIterator<Item = (Address, Address)>) -> Result<Self, GraphError> {
        let mut g = CreateGraph::default();
        for (creator, created) in edges {
            match g.parent.get(&created) {
                Some(p) if *p == creator => continue,
                Some(p) => {
                    return Err(GraphError::MultipleCreators { created, first: *p, second: creator })
                }
                None => {}
            }
            g.parent.insert(created, creator);
            g.children.entry(creator).or_default().insert(created);
        }
        Ok(g)
    }

    pub fn nodes(&self) -> BTreeSet<Address> {
        self.parent
            .iter()
            .flat_map(|(c, p)| [*c, *p])
            .collect()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Address, Address)> + '_ {
        self.children
            .iter()
            .flat_map(|(p, cs)| cs.iter().map(move |c| (*p, *c)))
    }

    pub fn edge_count(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn creator_of(&self, address: &Address) -> Option<Address> {
        self.parent.get(address).copied()
    }

    pub fn children_of(&self, address: &Address) -> impl Iterator<Item = Address> + '_ {
        self.children.get(address).into_iter().flat_map(|s| s.iter().copied())
    }

    /// Transitive descendants, excluding the node itself.
    pub fn descendants(&self, address: &Address) -> BTreeSet<Address> {
        let mut out = BTreeSet::new();
        let mut stack: Vec<Address> = self.children_of(address).collect();
        while let Some(n) = stack.pop() {
            if out.insert(n) {
                stack.extend(self.children_of(&n));
            }
        }
        out
    }
}

/// One edge per CREATE internal record.
pub fn build_create_graph(store: &DataStore) -> Result<CreateGraph, GraphError> {
    CreateGraph::from_edges(
        store
            .internal()
            .iter()
            .filter(|t| t.opcode == Opcode::Create)
            .map(|t| (t.sender, t.receiver)),
    )
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SuspectExpansion {
    pub seed: BTreeSet<Address>,
    pub expanded: BTreeSet<Address>,
    pub excluded: BTreeSet<Address>,
    /// EOA creators met while walking up; recorded, never expanded.
    pub eoa_creators: BTreeSet<Address>,
    /// Members reached from each seed (the seed's component).
    pub per_seed_component: BTreeMap<Address, BTreeSet<Address>>,
}

/// Expands `seed` to every contract connected to it through CREATE edges in
/// either direction. Excluded nodes are neither added nor walked through, and
/// EOAs stop the walk.
pub fn expand_suspects(
    graph: &CreateGraph,
    seed: &BTreeSet<Address>,
    excluded: &BTreeSet<Address>,
    kind_of: impl Fn(&Address) -> AccountKind,
) -> SuspectExpansion {
    let mut out = SuspectExpansion {
        seed: seed.clone(),
        excluded: excluded.clone(),
        ..Default::default()
    };
    let passable = |a: &Address| !excluded.contains(a) && kind_of(a) == AccountKind::Contract;

    // Seeds sharing a component share the walk.
    let mut component_of: BTreeMap<Address, usize> = BTreeMap::new();
    let mut components: Vec<BTreeSet<Address>> = Vec::new();

    for s in seed {
        if !passable(s) {
            out.per_seed_component.insert(*s, BTreeSet::new());
            continue;
        }
        if let Some(&c) = component_of.get(s) {
            out.per_seed_component.insert(*s, components[c].clone());
            continue;
        }
        let mut members = BTreeSet::new();
        let mut queue = VecDeque::from([*s]);
        members.insert(*s);
        while let Some(n) = queue.pop_front() {
            let up = graph.creator_of(&n);
            for next in up.into_iter().chain(graph.children_of(&n)) {
                if members.contains(&next) || excluded.contains(&next) {
                    continue;
                }
                if kind_of(&next) != AccountKind::Contract {
                    out.eoa_creators.insert(next);
                    continue;
                }
                members.insert(next);
                queue.push_back(next);
            }
        }
        let id = components.len();
        for m in &members {
            component_of.insert(*m, id);
        }
        out.expanded.extend(members.iter().copied());
        out.per_seed_component.insert(*s, members.clone());
        components.push(members);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedStats {
    pub seed: Address,
    /// `None` when the seed's creator is not in the graph.
    pub creator_kind: Option<AccountKind>,
    pub creator: Option<Address>,
    pub children: usize,
    pub descendants: usize,
    pub component_size: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ComponentAggregate {
    pub seeds: usize,
    pub seeds_created_by_eoa: usize,
    pub seeds_created_by_contract: usize,
    pub seeds_with_unknown_creator: usize,
    /// Seeds with at least one CREATE child.
    pub seeds_with_children: usize,
    /// Σ direct children over seeds.
    pub children_created: usize,
    /// Distinct contract parents of seeds.
    pub distinct_contract_parents: usize,
    pub expanded_size: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ComponentReport {
    pub per_seed: Vec<SeedStats>,
    pub aggregate: ComponentAggregate,
}

pub fn component_stats(
    graph: &CreateGraph,
    expansion: &SuspectExpansion,
    kind_of: impl Fn(&Address) -> AccountKind,
) -> ComponentReport {
    let mut report = ComponentReport::default();
    let mut parents = BTreeSet::new();
    for s in &expansion.seed {
        let creator = graph.creator_of(s);
        let creator_kind = creator.map(|c| kind_of(&c));
        let children = graph.children_of(s).count();
        let stats = SeedStats {
            seed: *s,
            creator_kind,
            creator,
            children,
            descendants: graph.descendants(s).len(),
            component_size: expansion.per_seed_component.get(s).map_or(0, BTreeSet::len),
        };
        let agg = &mut report.aggregate;
        agg.seeds += 1;
        match creator_kind {
            Some(AccountKind::Eoa) => agg.seeds_created_by_eoa += 1,
            Some(AccountKind::Contract) => {
                agg.seeds_created_by_contract += 1;
                parents.insert(creator.unwrap());
            }
            None => agg.seeds_with_unknown_creator += 1,
        }
        if children > 0 {
            agg.seeds_with_children += 1;
        }
        agg.children_created += children;
        report.per_seed.push(stats);
    }
    report.aggregate.distinct_contract_parents = parents.len();
    report.aggregate.expanded_size = expansion.expanded.len();
    report
}
