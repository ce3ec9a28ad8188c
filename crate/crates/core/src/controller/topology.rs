//! Controller-side topology memory: switches, directed links and
//! primary/backup path tags.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::model::{canonical, Dpid, PortNo, PortRef};
use crate::switch_agent::{Bucket, FailoverGroup, GroupId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedPath {
    /// Switch sequence from source to destination.
    pub hops: Vec<Dpid>,
    /// Port on the source switch the path leaves through.
    pub first_port: PortNo,
}

impl TaggedPath {
    pub fn len(&self) -> usize {
        self.hops.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.hops.len() <= 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathTag {
    pub primary: TaggedPath,
    pub backups: Vec<TaggedPath>,
}

/// Net effect of one controller step on the map.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MapDelta {
    pub added_links: Vec<(PortRef, PortRef)>,
    pub removed_links: Vec<(PortRef, PortRef)>,
    pub added_switches: Vec<Dpid>,
    pub removed_switches: Vec<Dpid>,
}

impl MapDelta {
    pub fn is_empty(&self) -> bool {
        self.added_links.is_empty()
            && self.removed_links.is_empty()
            && self.added_switches.is_empty()
            && self.removed_switches.is_empty()
    }

    /// Whether the link set changed in a way that can affect path tags.
    pub fn touches_links(&self) -> bool {
        !self.added_links.is_empty() || !self.removed_links.is_empty() || !self.removed_switches.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TopologyMap {
    switches: BTreeSet<Dpid>,
    /// Directed links keyed by the port the LLDP left through.
    links: BTreeMap<PortRef, PortRef>,
    tags: BTreeMap<(Dpid, Dpid), PathTag>,
    safe_to_remove: BTreeSet<(PortRef, PortRef)>,
}

/// Exportable view of the map.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapSnapshot {
    pub switches: Vec<Dpid>,
    pub directed_links: Vec<(PortRef, PortRef)>,
    pub path_tags: Vec<((Dpid, Dpid), PathTag)>,
    pub safe_to_remove: Vec<(PortRef, PortRef)>,
}

impl TopologyMap {
    pub fn switches(&self) -> &BTreeSet<Dpid> {
        &self.switches
    }

    pub fn contains_switch(&self, d: Dpid) -> bool {
        self.switches.contains(&d)
    }

    pub fn directed_links(&self) -> BTreeSet<(PortRef, PortRef)> {
        self.links.iter().map(|(a, b)| (*a, *b)).collect()
    }

    pub fn link_from(&self, src: PortRef) -> Option<PortRef> {
        self.links.get(&src).copied()
    }

    pub fn has_link(&self, src: PortRef, dst: PortRef) -> bool {
        self.links.get(&src) == Some(&dst)
    }

    pub fn is_bidirectional(&self, a: PortRef, b: PortRef) -> bool {
        self.has_link(a, b) && self.has_link(b, a)
    }

    pub fn tag(&self, src: Dpid, dst: Dpid) -> Option<&PathTag> {
        self.tags.get(&(src, dst))
    }

    pub fn tags(&self) -> &BTreeMap<(Dpid, Dpid), PathTag> {
        &self.tags
    }

    pub fn is_safe_to_remove(&self, a: PortRef, b: PortRef) -> bool {
        self.safe_to_remove.contains(&canonical(a, b))
    }

    pub fn add_switch(&mut self, d: Dpid, delta: &mut MapDelta) {
        if self.switches.insert(d) {
            delta.added_switches.push(d);
        }
    }

    /// Removes a switch with all its links.
    pub fn remove_switch(&mut self, d: Dpid, delta: &mut MapDelta) {
        let ports: Vec<PortRef> = self
            .links
            .iter()
            .filter(|(a, b)| a.dpid == d || b.dpid == d)
            .map(|(a, _)| *a)
            .collect();
        for a in ports {
            let b = self.links.remove(&a).expect("present");
            delta.removed_links.push((a, b));
        }
        if self.switches.remove(&d) {
            delta.removed_switches.push(d);
        }
    }

    /// Adds `src -> dst`, replacing any other link leaving `src`. Both
    /// switches join the map if needed.
    pub fn add_link(&mut self, src: PortRef, dst: PortRef, delta: &mut MapDelta) {
        if self.has_link(src, dst) {
            return;
        }
        self.add_switch(src.dpid, delta);
        self.add_switch(dst.dpid, delta);
        if let Some(old) = self.links.insert(src, dst) {
            delta.removed_links.push((src, old));
        }
        delta.added_links.push((src, dst));
    }

    pub fn remove_link(&mut self, src: PortRef, delta: &mut MapDelta) -> bool {
        match self.links.remove(&src) {
            Some(dst) => {
                delta.removed_links.push((src, dst));
                true
            }
            None => false,
        }
    }

    /// Removes every directed link with `port` as either endpoint.
    pub fn remove_links_at(&mut self, port: PortRef, delta: &mut MapDelta) -> bool {
        let mut srcs: Vec<PortRef> = self.links.iter().filter(|(_, b)| **b == port).map(|(a, _)| *a).collect();
        if self.links.contains_key(&port) {
            srcs.push(port);
        }
        srcs.sort();
        srcs.dedup();
        let mut any = false;
        for s in srcs {
            any |= self.remove_link(s, delta);
        }
        any
    }

    pub fn has_links(&self, d: Dpid) -> bool {
        self.links.iter().any(|(a, b)| a.dpid == d || b.dpid == d)
    }

    /// Adjacency over links confirmed in both directions, each list sorted
    /// by neighbour then port.
    fn adjacency(&self) -> (Vec<Dpid>, Vec<Vec<(PortNo, usize)>>) {
        let nodes: Vec<Dpid> = self.switches.iter().copied().collect();
        let index: BTreeMap<Dpid, usize> = nodes.iter().enumerate().map(|(i, d)| (*d, i)).collect();
        let mut adj = vec![Vec::new(); nodes.len()];
        for (a, b) in &self.links {
            if self.links.get(b) == Some(a) {
                if let (Some(&ia), Some(&ib)) = (index.get(&a.dpid), index.get(&b.dpid)) {
                    adj[ia].push((a.port, ib));
                }
            }
        }
        for list in &mut adj {
            list.sort_by_key(|(p, n)| (*n, *p));
        }
        (nodes, adj)
    }

    /// Recomputes every path tag and returns the failover groups they
    /// imply, keyed by (switch, destination).
    ///
    /// The primary path is the lexicographically smallest shortest path.
    /// Each other port of the source yields a backup: that port followed by
    /// the smallest shortest path from its neighbour that avoids the
    /// source.
    pub fn retag(&mut self) -> BTreeMap<(Dpid, Dpid), FailoverGroup> {
        let (nodes, adj) = self.adjacency();
        let n = nodes.len();
        let mut tags = BTreeMap::new();
        let mut groups = BTreeMap::new();
        for d in 0..n {
            let dist = bfs(&adj, d, None);
            for s in 0..n {
                if s == d || dist[s] == UNREACHABLE {
                    continue;
                }
                let (port, hops) = greedy_path(&adj, &dist, s, d);
                let primary = TaggedPath { hops: hops.iter().map(|&i| nodes[i]).collect(), first_port: port };
                let avoid = bfs(&adj, d, Some(s));
                let mut backups = Vec::new();
                for &(p, nb) in &adj[s] {
                    if p == port {
                        continue;
                    }
                    let mut path = vec![s];
                    if nb != d {
                        if avoid[nb] == UNREACHABLE {
                            continue;
                        }
                        path.extend(greedy_path(&adj, &avoid, nb, d).1);
                    } else {
                        path.push(d);
                    }
                    backups.push(TaggedPath { hops: path.iter().map(|&i| nodes[i]).collect(), first_port: p });
                }
                backups.sort_by(|a, b| {
                    (a.len(), &a.hops, a.first_port).cmp(&(b.len(), &b.hops, b.first_port))
                });
                if !backups.is_empty() {
                    let mut buckets = vec![Bucket::via(port)];
                    buckets.extend(backups.iter().map(|b| Bucket::via(b.first_port)));
                    groups.insert(
                        (nodes[s], nodes[d]),
                        FailoverGroup { group_id: GroupId(nodes[d].0), buckets },
                    );
                }
                tags.insert((nodes[s], nodes[d]), PathTag { primary, backups });
            }
        }
        self.safe_to_remove = self
            .links
            .iter()
            .filter(|(a, b)| a < b && self.links.get(b) == Some(a))
            .filter(|(a, b)| tags.get(&(a.dpid, b.dpid)).is_some_and(|t: &PathTag| !t.backups.is_empty()))
            .map(|(a, b)| (*a, *b))
            .collect();
        self.tags = tags;
        groups
    }

    pub fn snapshot(&self) -> MapSnapshot {
        MapSnapshot {
            switches: self.switches.iter().copied().collect(),
            directed_links: self.links.iter().map(|(a, b)| (*a, *b)).collect(),
            path_tags: self.tags.iter().map(|(k, v)| (*k, v.clone())).collect(),
            safe_to_remove: self.safe_to_remove.iter().copied().collect(),
        }
    }
}

const UNREACHABLE: u32 = u32::MAX;

fn bfs(adj: &[Vec<(PortNo, usize)>], from: usize, skip: Option<usize>) -> Vec<u32> {
    let mut dist = vec![UNREACHABLE; adj.len()];
    if skip == Some(from) {
        return dist;
    }
    dist[from] = 0;
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        for &(_, v) in &adj[u] {
            if Some(v) != skip && dist[v] == UNREACHABLE {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Walks from `s` towards the BFS root taking the smallest neighbour that
/// gets one hop closer. Links are symmetric, so distances from the root
/// are distances to it.
fn greedy_path(adj: &[Vec<(PortNo, usize)>], dist: &[u32], s: usize, d: usize) -> (PortNo, Vec<usize>) {
    let mut path = vec![s];
    let mut first = None;
    let mut cur = s;
    while cur != d {
        let &(port, next) = adj[cur]
            .iter()
            .find(|(_, v)| dist[*v] != UNREACHABLE && dist[*v] + 1 == dist[cur])
            .expect("a closer neighbour exists on a finite distance");
        first.get_or_insert(port);
        path.push(next);
        cur = next;
    }
    (first.expect("source differs from destination"), path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(d: u64, n: u16) -> PortRef {
        PortRef::new(d, n)
    }

    fn bi(map: &mut TopologyMap, a: PortRef, b: PortRef) {
        let mut delta = MapDelta::default();
        map.add_link(a, b, &mut delta);
        map.add_link(b, a, &mut delta);
    }

    fn square() -> TopologyMap {
        let mut m = TopologyMap::default();
        bi(&mut m, p(1, 1), p(2, 1));
        bi(&mut m, p(2, 2), p(3, 1));
        bi(&mut m, p(3, 2), p(4, 2));
        bi(&mut m, p(4, 1), p(1, 2));
        m
    }

    #[test]
    fn equal_length_paths_break_ties_lexicographically() {
        let mut m = square();
        let groups = m.retag();
        let tag = m.tag(Dpid(1), Dpid(3)).unwrap();
        assert_eq!(tag.primary.hops, vec![Dpid(1), Dpid(2), Dpid(3)]);
        assert_eq!(tag.backups.len(), 1);
        assert_eq!(tag.backups[0].hops, vec![Dpid(1), Dpid(4), Dpid(3)]);
        let g = &groups[&(Dpid(1), Dpid(3))];
        assert_eq!(g.buckets, vec![Bucket::via(PortNo(1)), Bucket::via(PortNo(2))]);
        assert!(m.is_safe_to_remove(p(1, 1), p(2, 1)));
    }

    #[test]
    fn new_direct_link_becomes_primary() {
        let mut m = square();
        m.add_switch(Dpid(5), &mut MapDelta::default());
        // s1 and s3 get a third port each for the diagonal.
        bi(&mut m, p(1, 3), p(3, 3));
        m.retag();
        let tag = m.tag(Dpid(1), Dpid(3)).unwrap();
        assert_eq!(tag.primary.hops, vec![Dpid(1), Dpid(3)]);
        assert_eq!(tag.primary.first_port, PortNo(3));
        assert!(tag.backups.iter().all(|b| b.len() == 2));
        assert!(m.tag(Dpid(1), Dpid(5)).is_none(), "isolated switch has no tag");
    }

    #[test]
    fn chain_has_no_backups() {
        let mut m = TopologyMap::default();
        bi(&mut m, p(1, 1), p(2, 1));
        bi(&mut m, p(2, 2), p(3, 1));
        let groups = m.retag();
        assert!(groups.is_empty());
        assert!(m.tag(Dpid(1), Dpid(3)).unwrap().backups.is_empty());
        assert!(!m.is_safe_to_remove(p(1, 1), p(2, 1)));
    }

    #[test]
    fn one_way_links_are_not_used_for_paths() {
        let mut m = TopologyMap::default();
        m.add_link(p(1, 1), p(2, 1), &mut MapDelta::default());
        m.retag();
        assert!(m.tags().is_empty());
    }

    #[test]
    fn remove_links_at_port_drops_both_directions() {
        let mut m = square();
        let mut delta = MapDelta::default();
        assert!(m.remove_links_at(p(3, 2), &mut delta));
        assert_eq!(delta.removed_links.len(), 2);
        let mut again = MapDelta::default();
        assert!(!m.remove_links_at(p(4, 2), &mut again));
        assert!(again.is_empty());
    }
}
