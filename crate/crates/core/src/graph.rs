//! Causal graph of 5G causes, delay intermediates and WebRTC consequences,
//! its cause→consequence path enumeration, and per-window chain matching.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::detect::{EventId, FeatureVector, Selector};
use crate::error::{DominoError, Result};
use crate::trace::{Direction, Side, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Cause,
    Intermediate,
    Consequence,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Cause => "cause",
            NodeKind::Intermediate => "intermediate",
            NodeKind::Consequence => "consequence",
        }
    }
}

/// Which client's slot a node reads, relative to the media stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SideRole {
    Sender,
    Receiver,
    Local,
    Remote,
}

impl SideRole {
    pub fn resolve(self, media_dir: Direction) -> Side {
        match self {
            SideRole::Sender => media_dir.sender(),
            SideRole::Receiver => media_dir.receiver(),
            SideRole::Local => Side::Local,
            SideRole::Remote => Side::Remote,
        }
    }
}

/// Which radio direction a node reads. `Path` follows the chain: the media
/// direction on forward-delay chains, the opposite one on chains that pass
/// through a reverse-path node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirRole {
    Path,
    Forward,
    Reverse,
    Ul,
    Dl,
}

impl DirRole {
    pub fn resolve(self, media_dir: Direction, reverse_path: bool) -> Direction {
        match self {
            DirRole::Path if reverse_path => media_dir.opposite(),
            DirRole::Path | DirRole::Forward => media_dir,
            DirRole::Reverse => media_dir.opposite(),
            DirRole::Ul => Direction::Ul,
            DirRole::Dl => Direction::Dl,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlotBinding {
    Fixed(usize),
    BySide {
        local: usize,
        remote: usize,
        role: SideRole,
    },
    ByDir {
        ul: usize,
        dl: usize,
        role: DirRole,
    },
}

impl SlotBinding {
    pub fn resolve(&self, media_dir: Direction, reverse_path: bool) -> usize {
        match *self {
            SlotBinding::Fixed(i) => i,
            SlotBinding::BySide { local, remote, role } => match role.resolve(media_dir) {
                Side::Local => local,
                Side::Remote => remote,
            },
            SlotBinding::ByDir { ul, dl, role } => match role.resolve(media_dir, reverse_path) {
                Direction::Ul => ul,
                Direction::Dl => dl,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalNode {
    pub id: String,
    pub kind: NodeKind,
    /// Name of the bound event.
    pub event: String,
    pub binding: SlotBinding,
    /// Marks a reverse-path node: chains through it resolve `DirRole::Path`
    /// to the direction opposite the media stream.
    pub reverse_path: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalGraph {
    nodes: Vec<CausalNode>,
    edges: Vec<(String, String)>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChainPath {
    pub nodes: Vec<String>,
}

impl ChainPath {
    pub fn cause(&self) -> &str {
        &self.nodes[0]
    }

    pub fn consequence(&self) -> &str {
        self.nodes.last().expect("non-empty path")
    }

    pub fn render(&self) -> String {
        self.nodes.join(" -> ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainMatch {
    pub window_start: Timestamp,
    pub path: ChainPath,
    /// Direction of the media stream the consequence belongs to.
    pub stream_dir: Direction,
    pub cause_id: String,
    pub consequence_id: String,
}

impl CausalGraph {
    /// Builds and validates a graph: unique ids, known edge endpoints, no
    /// edges into causes or out of consequences, acyclic.
    pub fn new(nodes: Vec<CausalNode>, edges: Vec<(String, String)>) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id.clone(), i).is_some() {
                return Err(DominoError::Graph(format!("duplicate node `{}`", n.id)));
            }
        }
        for (a, b) in &edges {
            for end in [a, b] {
                if !index.contains_key(end) {
                    return Err(DominoError::Graph(format!("edge references unknown node `{end}`")));
                }
            }
            if nodes[index[b]].kind == NodeKind::Cause {
                return Err(DominoError::Graph(format!("cause `{b}` cannot have incoming edges")));
            }
            if nodes[index[a]].kind == NodeKind::Consequence {
                return Err(DominoError::Graph(format!(
                    "consequence `{a}` cannot have outgoing edges"
                )));
            }
        }
        let g = CausalGraph { nodes, edges, index };
        g.topo_order()?;
        Ok(g)
    }

    pub fn nodes(&self) -> &[CausalNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(String, String)] {
        &self.edges
    }

    pub fn node(&self, id: &str) -> Option<&CausalNode> {
        self.index_of(id).map(|i| &self.nodes[i])
    }

    fn index_of(&self, id: &str) -> Option<usize> {
        if self.index.is_empty() && !self.nodes.is_empty() {
            // deserialized graphs skip the index
            return self.nodes.iter().position(|n| n.id == id);
        }
        self.index.get(id).copied()
    }

    fn successors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for (a, b) in &self.edges {
            out[self.index_of(a).unwrap()].push(self.index_of(b).unwrap());
        }
        for s in &mut out {
            s.sort_by(|x, y| self.nodes[*x].id.cmp(&self.nodes[*y].id));
            s.dedup();
        }
        out
    }

    /// Kahn topological order; fails on a cycle.
    pub fn topo_order(&self) -> Result<Vec<usize>> {
        let succ = self.successors();
        let mut indeg = vec![0usize; self.nodes.len()];
        for s in &succ {
            for &j in s {
                indeg[j] += 1;
            }
        }
        let mut ready: Vec<usize> = (0..self.nodes.len()).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(i) = ready.pop() {
            order.push(i);
            for &j in &succ[i] {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    ready.push(j);
                }
            }
        }
        if order.len() != self.nodes.len() {
            return Err(DominoError::Graph("cycle detected".into()));
        }
        Ok(order)
    }

    pub fn causes(&self) -> impl Iterator<Item = &CausalNode> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Cause)
    }

    pub fn consequences(&self) -> impl Iterator<Item = &CausalNode> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Consequence)
    }

    pub fn is_reverse_path(&self, path: &ChainPath) -> bool {
        path.nodes
            .iter()
            .any(|id| self.node(id).is_some_and(|n| n.reverse_path))
    }

    /// Feature slots a path reads when analysing the stream in `media_dir`.
    pub fn path_slots(&self, path: &ChainPath, media_dir: Direction) -> Vec<usize> {
        let rev = self.is_reverse_path(path);
        path.nodes
            .iter()
            .map(|id| {
                self.node(id)
                    .expect("path over known nodes")
                    .binding
                    .resolve(media_dir, rev)
            })
            .collect()
    }
}

fn node(id: &str, kind: NodeKind, event: EventId, binding: SlotBinding) -> CausalNode {
    CausalNode {
        id: id.to_string(),
        kind,
        event: event.name().to_string(),
        binding,
        reverse_path: event == EventId::N12RevDelayUp,
    }
}

fn slot(e: EventId, sel: Selector) -> usize {
    e.slot(sel).expect("canonical slot")
}

fn by_side(e: EventId, role: SideRole) -> SlotBinding {
    SlotBinding::BySide {
        local: slot(e, Selector::Side(Side::Local)),
        remote: slot(e, Selector::Side(Side::Remote)),
        role,
    }
}

fn by_path_dir(e: EventId) -> SlotBinding {
    SlotBinding::ByDir {
        ul: slot(e, Selector::Dir(Direction::Ul)),
        dl: slot(e, Selector::Dir(Direction::Dl)),
        role: DirRole::Path,
    }
}

fn fixed(e: EventId) -> SlotBinding {
    SlotBinding::Fixed(slot(e, Selector::None))
}

/// The built-in graph: six causes, seven intermediates, three consequences.
pub fn default_graph() -> CausalGraph {
    use EventId::*;
    use NodeKind::*;
    let nodes = vec![
        node(
            "poor_channel",
            Cause,
            R16ChannelDegraded,
            by_path_dir(R16ChannelDegraded),
        ),
        node("cross_traffic", Cause, R15CrossTraffic, by_path_dir(R15CrossTraffic)),
        node("ul_scheduling", Cause, S19UlScheduling, fixed(S19UlScheduling)),
        node("harq_retx", Cause, R17HarqRetx, by_path_dir(R17HarqRetx)),
        node("rlc_retx", Cause, R18RlcRetx, by_path_dir(R18RlcRetx)),
        node("rrc_state", Cause, S20RrcChange, fixed(S20RrcChange)),
        node("tbs_drop", Intermediate, R13TbsDrop, by_path_dir(R13TbsDrop)),
        node("rate_gap", Intermediate, R14RateGap, by_path_dir(R14RateGap)),
        node("fwd_delay_up", Intermediate, N11FwdDelayUp, fixed(N11FwdDelayUp)),
        node("rev_delay_up", Intermediate, N12RevDelayUp, fixed(N12RevDelayUp)),
        node(
            "outstanding_up",
            Intermediate,
            A9OutstandingUp,
            by_side(A9OutstandingUp, SideRole::Sender),
        ),
        node(
            "cwnd_full",
            Intermediate,
            A8CwndFull,
            by_side(A8CwndFull, SideRole::Sender),
        ),
        node(
            "gcc_overuse",
            Intermediate,
            A6GccOveruse,
            by_side(A6GccOveruse, SideRole::Sender),
        ),
        node(
            "jb_drain",
            Consequence,
            A4JbDrain,
            by_side(A4JbDrain, SideRole::Receiver),
        ),
        node(
            "target_bitrate_drop",
            Consequence,
            A5TargetDrop,
            by_side(A5TargetDrop, SideRole::Sender),
        ),
        node(
            "pushback_rate_drop",
            Consequence,
            A7PushbackDrop,
            by_side(A7PushbackDrop, SideRole::Sender),
        ),
    ];
    let mut edges: Vec<(&str, &str)> = vec![
        ("poor_channel", "tbs_drop"),
        ("cross_traffic", "tbs_drop"),
        ("tbs_drop", "rate_gap"),
        ("rate_gap", "fwd_delay_up"),
        ("rate_gap", "rev_delay_up"),
    ];
    for cause in ["ul_scheduling", "harq_retx", "rlc_retx", "rrc_state"] {
        edges.push((cause, "fwd_delay_up"));
        edges.push((cause, "rev_delay_up"));
    }
    edges.extend([
        ("fwd_delay_up", "jb_drain"),
        ("fwd_delay_up", "gcc_overuse"),
        ("fwd_delay_up", "outstanding_up"),
        ("gcc_overuse", "target_bitrate_drop"),
        ("rev_delay_up", "outstanding_up"),
        ("outstanding_up", "cwnd_full"),
        ("cwnd_full", "pushback_rate_drop"),
    ]);
    CausalGraph::new(
        nodes,
        edges.into_iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
    )
    .expect("built-in graph is valid")
}

/// Every simple cause→consequence path, sorted lexicographically by node ids.
pub fn enumerate_chains(g: &CausalGraph) -> Result<Vec<ChainPath>> {
    g.topo_order()?;
    let succ = g.successors();
    let mut out = Vec::new();
    fn dfs(g: &CausalGraph, succ: &[Vec<usize>], at: usize, stack: &mut Vec<usize>, out: &mut Vec<ChainPath>) {
        stack.push(at);
        if g.nodes[at].kind == NodeKind::Consequence {
            out.push(ChainPath {
                nodes: stack.iter().map(|&i| g.nodes[i].id.clone()).collect(),
            });
        }
        for &n in &succ[at] {
            if !stack.contains(&n) {
                dfs(g, succ, n, stack, out);
            }
        }
        stack.pop();
    }
    for (i, n) in g.nodes.iter().enumerate() {
        if n.kind == NodeKind::Cause {
            dfs(g, &succ, i, &mut Vec::new(), &mut out);
        }
    }
    out.sort();
    Ok(out)
}

/// Precomputed slot lists for a fixed set of chains.
#[derive(Debug, Clone)]
pub struct ChainMatcher {
    pub graph: CausalGraph,
    pub chains: Vec<ChainPath>,
    resolved: [Vec<Vec<usize>>; 2],
    /// Require onsets to be non-decreasing along each matched path.
    pub strict_order: bool,
}

fn dir_idx(d: Direction) -> usize {
    match d {
        Direction::Ul => 0,
        Direction::Dl => 1,
    }
}

impl ChainMatcher {
    pub fn new(graph: CausalGraph, chains: Vec<ChainPath>) -> Self {
        let resolved = [
            chains.iter().map(|c| graph.path_slots(c, Direction::Ul)).collect(),
            chains.iter().map(|c| graph.path_slots(c, Direction::Dl)).collect(),
        ];
        ChainMatcher {
            graph,
            chains,
            resolved,
            strict_order: false,
        }
    }

    pub fn for_graph(graph: CausalGraph) -> Result<Self> {
        let chains = enumerate_chains(&graph)?;
        Ok(Self::new(graph, chains))
    }

    pub fn with_strict_order(mut self, strict: bool) -> Self {
        self.strict_order = strict;
        self
    }

    /// Chains whose every node bit is set in `fv`.
    pub fn matches(&self, fv: &FeatureVector, media_dir: Direction, window_start: Timestamp) -> Vec<ChainMatch> {
        self.chains
            .iter()
            .zip(&self.resolved[dir_idx(media_dir)])
            .filter(|(_, slots)| slots.iter().all(|&s| fv.get(s)))
            .filter(|(_, slots)| !self.strict_order || ordered(fv, slots))
            .map(|(path, _)| ChainMatch {
                window_start,
                path: path.clone(),
                stream_dir: media_dir,
                cause_id: path.cause().to_string(),
                consequence_id: path.consequence().to_string(),
            })
            .collect()
    }

    /// Causes attributed to each consequence that is present in `fv`.
    pub fn attribute(&self, fv: &FeatureVector, media_dir: Direction, matches: &[ChainMatch]) -> Attribution {
        attribute_with(&self.graph, fv, media_dir, matches)
    }
}

fn ordered(fv: &FeatureVector, slots: &[usize]) -> bool {
    let onsets: Option<Vec<Timestamp>> = slots.iter().map(|&s| fv.onset(s)).collect();
    match onsets {
        Some(o) => o.windows(2).all(|w| w[0] <= w[1]),
        // without onsets ordering cannot be checked
        None => true,
    }
}

/// Matches every chain of `g` against one window's features.
pub fn match_chains(fv: &FeatureVector, g: &CausalGraph, media_dir: Direction) -> Result<Vec<ChainMatch>> {
    let m = ChainMatcher::for_graph(g.clone())?;
    Ok(m.matches(fv, media_dir, Timestamp::ZERO))
}

/// Consequence id → attributed cause ids; an empty set means unknown cause.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribution(pub BTreeMap<String, BTreeSet<String>>);

impl Attribution {
    pub fn is_unknown(&self, consequence: &str) -> bool {
        self.0.get(consequence).is_some_and(BTreeSet::is_empty)
    }
}

fn attribute_with(g: &CausalGraph, fv: &FeatureVector, media_dir: Direction, matches: &[ChainMatch]) -> Attribution {
    let mut out = BTreeMap::new();
    for c in g.consequences() {
        if fv.get(c.binding.resolve(media_dir, false)) {
            let causes: BTreeSet<String> = matches
                .iter()
                .filter(|m| m.consequence_id == c.id && m.stream_dir == media_dir)
                .map(|m| m.cause_id.clone())
                .collect();
            out.insert(c.id.clone(), causes);
        }
    }
    Attribution(out)
}

pub fn attribute(fv: &FeatureVector, g: &CausalGraph, media_dir: Direction) -> Result<Attribution> {
    let matches = match_chains(fv, g, media_dir)?;
    Ok(attribute_with(g, fv, media_dir, &matches))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::FEATURE_LEN;
    use proptest::prelude::*;

    fn mk(nodes: &[(&str, NodeKind)], edges: &[(&str, &str)]) -> Result<CausalGraph> {
        CausalGraph::new(
            nodes
                .iter()
                .enumerate()
                .map(|(i, (id, k))| CausalNode {
                    id: id.to_string(),
                    kind: *k,
                    event: id.to_string(),
                    binding: SlotBinding::Fixed(i),
                    reverse_path: false,
                })
                .collect(),
            edges.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
        )
    }

    /// Independent path counter: dynamic programming over reverse topological
    /// order (number of paths from a node to any consequence).
    fn count_paths(g: &CausalGraph) -> usize {
        let order = g.topo_order().unwrap();
        let succ = g.successors();
        let mut ways = vec![0usize; g.nodes.len()];
        for &i in order.iter().rev() {
            ways[i] =
                usize::from(g.nodes[i].kind == NodeKind::Consequence) + succ[i].iter().map(|&j| ways[j]).sum::<usize>();
        }
        g.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == NodeKind::Cause)
            .map(|(i, _)| ways[i])
            .sum()
    }

    #[test]
    fn default_graph_has_24_chains() {
        let g = default_graph();
        let chains = enumerate_chains(&g).unwrap();
        assert_eq!(chains.len(), 24);
        assert_eq!(count_paths(&g), 24);
        assert!(chains.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(g.causes().count(), 6);
        assert_eq!(g.consequences().count(), 3);
    }

    #[test]
    fn every_cause_reaches_every_consequence() {
        let g = default_graph();
        let chains = enumerate_chains(&g).unwrap();
        for c in g.causes() {
            for q in g.consequences() {
                assert!(
                    chains.iter().any(|p| p.cause() == c.id && p.consequence() == q.id),
                    "{} -/-> {}",
                    c.id,
                    q.id
                );
            }
        }
    }

    #[test]
    fn small_graphs() {
        use NodeKind::*;
        let g = mk(&[("c", Cause), ("q", Consequence)], &[("c", "q")]).unwrap();
        assert_eq!(enumerate_chains(&g).unwrap().len(), 1);
        let g = mk(
            &[
                ("c", Cause),
                ("a", Intermediate),
                ("b", Intermediate),
                ("q", Consequence),
            ],
            &[("c", "a"), ("c", "b"), ("a", "q"), ("b", "q")],
        )
        .unwrap();
        let chains = enumerate_chains(&g).unwrap();
        assert_eq!(chains.len(), 2);
        assert_eq!(chains[0].render(), "c -> a -> q");
    }

    #[test]
    fn invalid_graphs_rejected() {
        use NodeKind::*;
        assert!(mk(
            &[
                ("c", Cause),
                ("a", Intermediate),
                ("b", Intermediate),
                ("q", Consequence)
            ],
            &[("c", "a"), ("a", "b"), ("b", "a"), ("b", "q")]
        )
        .is_err());
        assert!(mk(&[("c", Cause), ("q", Consequence)], &[("q", "c")]).is_err());
        assert!(mk(&[("c", Cause)], &[("c", "zz")]).is_err());
    }

    #[test]
    fn saturated_and_consequence_only() {
        let g = default_graph();
        let all = FeatureVector::from_bits(vec![true; FEATURE_LEN]);
        assert_eq!(match_chains(&all, &g, Direction::Dl).unwrap().len(), 24);
        let mut only = FeatureVector::zeros(FEATURE_LEN);
        for q in g.consequences() {
            for d in Direction::BOTH {
                only.bits[q.binding.resolve(d, false)] = true;
            }
        }
        assert!(match_chains(&only, &g, Direction::Dl).unwrap().is_empty());
        let attr = attribute(&only, &g, Direction::Dl).unwrap();
        assert_eq!(attr.0.len(), 3);
        assert!(attr.is_unknown("jb_drain"));
    }

    fn set(fv: &mut FeatureVector, e: EventId, sel: Selector) {
        fv.bits[e.slot(sel).unwrap()] = true;
    }

    #[test]
    fn cross_traffic_target_chain_on_downlink() {
        use EventId::*;
        let g = default_graph();
        let mut fv = FeatureVector::zeros(FEATURE_LEN);
        let dl = Selector::Dir(Direction::Dl);
        set(&mut fv, R15CrossTraffic, dl);
        set(&mut fv, R13TbsDrop, dl);
        set(&mut fv, R14RateGap, dl);
        set(&mut fv, N11FwdDelayUp, Selector::None);
        // DL media is sent by the remote client
        set(&mut fv, A6GccOveruse, Selector::Side(Side::Remote));
        set(&mut fv, A5TargetDrop, Selector::Side(Side::Remote));
        let m = match_chains(&fv, &g, Direction::Dl).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(
            m[0].path.render(),
            "cross_traffic -> tbs_drop -> rate_gap -> fwd_delay_up -> gcc_overuse -> target_bitrate_drop"
        );
        assert!(match_chains(&fv, &g, Direction::Ul).unwrap().is_empty());
    }

    #[test]
    fn reverse_path_uses_opposite_direction() {
        use EventId::*;
        let g = default_graph();
        let mut fv = FeatureVector::zeros(FEATURE_LEN);
        // HARQ on DL delays RTCP feedback for the UL stream
        set(&mut fv, R17HarqRetx, Selector::Dir(Direction::Dl));
        set(&mut fv, N12RevDelayUp, Selector::None);
        for e in [A9OutstandingUp, A8CwndFull, A7PushbackDrop] {
            set(&mut fv, e, Selector::Side(Side::Local));
        }
        let m = match_chains(&fv, &g, Direction::Ul).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].cause_id, "harq_retx");
        assert_eq!(m[0].consequence_id, "pushback_rate_drop");
    }

    #[test]
    fn multi_cause_attribution() {
        use EventId::*;
        let g = default_graph();
        let mut fv = FeatureVector::zeros(FEATURE_LEN);
        set(&mut fv, R17HarqRetx, Selector::Dir(Direction::Ul));
        set(&mut fv, R18RlcRetx, Selector::Dir(Direction::Ul));
        set(&mut fv, N11FwdDelayUp, Selector::None);
        set(&mut fv, A4JbDrain, Selector::Side(Side::Remote));
        let attr = attribute(&fv, &g, Direction::Ul).unwrap();
        let causes: Vec<&str> = attr.0["jb_drain"].iter().map(String::as_str).collect();
        assert_eq!(causes, vec!["harq_retx", "rlc_retx"]);
        assert!(attribute(&FeatureVector::zeros(FEATURE_LEN), &g, Direction::Ul)
            .unwrap()
            .0
            .is_empty());
    }

    #[test]
    fn strict_order_needs_onsets_in_sequence() {
        use EventId::*;
        let g = default_graph();
        let mut fv = FeatureVector::zeros(FEATURE_LEN);
        fv.onsets = vec![None; FEATURE_LEN];
        let mut put = |e: EventId, sel: Selector, t: u64| {
            let i = e.slot(sel).unwrap();
            fv.bits[i] = true;
            fv.onsets[i] = Some(Timestamp::from_micros(t));
        };
        put(R18RlcRetx, Selector::Dir(Direction::Ul), 10);
        put(N11FwdDelayUp, Selector::None, 20);
        put(A4JbDrain, Selector::Side(Side::Remote), 5);
        let m = ChainMatcher::for_graph(g).unwrap();
        assert_eq!(m.matches(&fv, Direction::Ul, Timestamp::ZERO).len(), 1);
        let strict = m.with_strict_order(true);
        assert!(strict.matches(&fv, Direction::Ul, Timestamp::ZERO).is_empty());
    }

    proptest! {
        #[test]
        fn matching_is_monotone_and_sound(bits in proptest::collection::vec(any::<bool>(), FEATURE_LEN), flip in 0usize..FEATURE_LEN, ul in any::<bool>()) {
            let g = default_graph();
            let dir = if ul { Direction::Ul } else { Direction::Dl };
            let fv = FeatureVector::from_bits(bits);
            let before = match_chains(&fv, &g, dir).unwrap();
            let chains = enumerate_chains(&g).unwrap();
            for m in &before {
                prop_assert!(chains.contains(&m.path));
                let slots = g.path_slots(&m.path, dir);
                prop_assert!(fv.get(slots[0]) && fv.get(*slots.last().unwrap()));
            }
            let mut more = fv.clone();
            more.bits[flip] = true;
            let after = match_chains(&more, &g, dir).unwrap();
            for m in &before {
                prop_assert!(after.contains(m));
            }
        }
    }
}
