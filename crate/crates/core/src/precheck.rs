//! Aggregate trees over weighted keys, sub-approval responses and nonces.
//!
//! Every node stores the sums of its subtree, so a failing cluster approval is
//! narrowed down to the offending leaves by checking stored node values under
//! the one global challenge, with no re-aggregation.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::ops::Range;

use crate::approval::{approval_challenge, AggKey, AverageValue};
use crate::group::Group;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PrecheckError {
    #[error("a tree needs at least two leaves, got {0}")]
    TooFewLeaves(usize),
    #[error("leaf lists differ in length: {keys} keys, {responses} responses, {nonces} nonces")]
    LengthMismatch {
        keys: usize,
        responses: usize,
        nonces: usize,
    },
}

/// Work done by tree checks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CheckStats {
    /// Node equations evaluated.
    pub verifications: u64,
    /// Scalar multiplications of group points.
    pub exponentiations: u64,
    /// Group additions outside scalar multiplication.
    pub additions: u64,
}

impl CheckStats {
    pub fn merge(&mut self, other: &CheckStats) {
        self.verifications += other.verifications;
        self.exponentiations += other.exponentiations;
        self.additions += other.additions;
    }
}

/// How the descent treats the right child of a failing node.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum DescentRule {
    /// Check the left child; if it passes, the right child must fail and is
    /// descended into unchecked.
    #[default]
    InferSibling,
    /// Check both children of every failing node.
    CheckBoth,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode<G: Group> {
    /// Leaf positions covered, `lo..hi`.
    pub leaves: Range<usize>,
    /// Indices of the left and right child in the node array.
    pub children: Option<(usize, usize)>,
    /// `Σ a_i · pk_i` over the subtree.
    pub key: G::Point,
    /// `Σ s_i` over the subtree.
    pub response: G::Scalar,
    /// `Σ R_i` over the subtree.
    pub nonce: G::Point,
}

/// Key, signature and nonce trees sharing one shape, stored as `2n − 1` nodes in pre-order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggTree<G: Group> {
    nodes: Vec<TreeNode<G>>,
}

impl<G: Group> AggTree<G> {
    /// Builds from per-leaf weighted keys `a_i · pk_i`, responses `s_i` and nonces `R_i`.
    pub fn from_leaves(
        weighted_keys: &[G::Point],
        responses: &[G::Scalar],
        nonces: &[G::Point],
    ) -> Result<Self, PrecheckError> {
        let n = weighted_keys.len();
        if responses.len() != n || nonces.len() != n {
            return Err(PrecheckError::LengthMismatch {
                keys: n,
                responses: responses.len(),
                nonces: nonces.len(),
            });
        }
        if n < 2 {
            return Err(PrecheckError::TooFewLeaves(n));
        }
        let mut nodes = Vec::with_capacity(2 * n - 1);
        build(&mut nodes, 0..n, weighted_keys, responses, nonces);
        Ok(AggTree { nodes })
    }

    pub fn nodes(&self) -> &[TreeNode<G>] {
        &self.nodes
    }

    pub fn root(&self) -> &TreeNode<G> {
        &self.nodes[0]
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes[0].leaves.len()
    }

    fn challenge(&self, avg: &AverageValue) -> G::Scalar {
        let root = self.root();
        approval_challenge::<G>(&root.key, &root.nonce, avg)
    }

    fn check(&self, node: usize, e: &G::Scalar, stats: &mut CheckStats) -> bool {
        let n = &self.nodes[node];
        stats.verifications += 1;
        stats.exponentiations += 2;
        stats.additions += 1;
        G::mul_base(&n.response) == n.nonce + n.key * *e
    }

    fn descend(
        &self,
        node: usize,
        e: &G::Scalar,
        rule: DescentRule,
        bad: &mut BTreeSet<usize>,
        stats: &mut CheckStats,
    ) {
        let Some((left, right)) = self.nodes[node].children else {
            bad.insert(self.nodes[node].leaves.start);
            return;
        };
        let left_fails = !self.check(left, e, stats);
        if left_fails {
            self.descend(left, e, rule, bad, stats);
        }
        let right_fails = match rule {
            DescentRule::InferSibling if !left_fails => true,
            _ => !self.check(right, e, stats),
        };
        if right_fails {
            self.descend(right, e, rule, bad, stats);
        }
    }
}

fn build<G: Group>(
    nodes: &mut Vec<TreeNode<G>>,
    leaves: Range<usize>,
    keys: &[G::Point],
    responses: &[G::Scalar],
    nonces: &[G::Point],
) -> usize {
    let at = nodes.len();
    if leaves.len() == 1 {
        let i = leaves.start;
        nodes.push(TreeNode {
            leaves,
            children: None,
            key: keys[i],
            response: responses[i],
            nonce: nonces[i],
        });
        return at;
    }
    let mid = leaves.start + leaves.len() / 2;
    nodes.push(TreeNode {
        leaves: leaves.clone(),
        children: None,
        key: G::identity(),
        response: G::scalar_zero(),
        nonce: G::identity(),
    });
    let left = build(nodes, leaves.start..mid, keys, responses, nonces);
    let right = build(nodes, mid..leaves.end, keys, responses, nonces);
    let (l, r) = (&nodes[left], &nodes[right]);
    let (key, response, nonce) = (l.key + r.key, l.response + r.response, l.nonce + r.nonce);
    let parent = &mut nodes[at];
    parent.children = Some((left, right));
    parent.key = key;
    parent.response = response;
    parent.nonce = nonce;
    at
}

/// Trees for the members of `agg`, in key order, with their responses and nonces.
pub fn build_trees<G: Group>(
    agg: &AggKey<G>,
    responses: &[G::Scalar],
    nonces: &[G::Point],
) -> Result<AggTree<G>, PrecheckError> {
    let weighted: Vec<G::Point> = (0..agg.keys().len()).map(|i| agg.weighted_key(i)).collect();
    AggTree::from_leaves(&weighted, responses, nonces)
}

/// The root equation `g·s~ == R~ + pk~·e`.
pub fn precheck_root<G: Group>(tree: &AggTree<G>, avg: &AverageValue, stats: &mut CheckStats) -> bool {
    tree.check(0, &tree.challenge(avg), stats)
}

pub fn locate_invalid<G: Group>(tree: &AggTree<G>, avg: &AverageValue) -> (BTreeSet<usize>, CheckStats) {
    locate_invalid_with(tree, avg, DescentRule::default())
}

/// Leaf positions whose sub-approvals fail, with the root check included in the stats.
pub fn locate_invalid_with<G: Group>(
    tree: &AggTree<G>,
    avg: &AverageValue,
    rule: DescentRule,
) -> (BTreeSet<usize>, CheckStats) {
    let mut stats = CheckStats::default();
    let mut bad = BTreeSet::new();
    let e = tree.challenge(avg);
    if !tree.check(0, &e, &mut stats) {
        tree.descend(0, &e, rule, &mut bad, &mut stats);
    }
    (bad, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approval::{aggregate_key, sub_approval_response};
    use crate::group::Secp256k1;
    use crate::schnorr::KeyPair;
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    type K = Secp256k1;

    struct Fixture {
        tree_inputs: (AggKey<K>, Vec<<K as Group>::Scalar>, Vec<<K as Group>::Point>),
        avg: AverageValue,
        e: <K as Group>::Scalar,
    }

    fn honest(n: usize, rng: &mut ChaCha20Rng) -> Fixture {
        let kps: Vec<KeyPair<K>> = (0..n).map(|_| KeyPair::generate(rng)).collect();
        let pks: Vec<_> = kps.iter().map(|k| k.public()).collect();
        let agg = aggregate_key::<K>(&pks).unwrap();
        let ks: Vec<_> = (0..n).map(|_| K::random_nonzero_scalar(rng)).collect();
        let rs: Vec<_> = ks.iter().map(K::mul_base).collect();
        let r_sum = rs.iter().fold(K::identity(), |a, r| a + *r);
        let avg = AverageValue::new(rng.next_u64() >> 8, n);
        let e = approval_challenge::<K>(&agg.key(), &r_sum, &avg);
        let ss = (0..n)
            .map(|i| sub_approval_response::<K>(&ks[i], &agg.coefficients()[i], kps[i].secret(), &e))
            .collect();
        Fixture {
            tree_inputs: (agg, ss, rs),
            avg,
            e,
        }
    }

    fn individually_bad(f: &Fixture) -> BTreeSet<usize> {
        let (agg, ss, rs) = &f.tree_inputs;
        (0..ss.len())
            .filter(|i| K::mul_base(&ss[*i]) != rs[*i] + agg.weighted_key(*i) * f.e)
            .collect()
    }

    fn leaf_sizes(tree: &AggTree<K>, node: usize, out: &mut Vec<(usize, usize, usize)>) {
        if let Some((l, r)) = tree.nodes()[node].children {
            out.push((
                tree.nodes()[node].leaves.len(),
                tree.nodes()[l].leaves.len(),
                tree.nodes()[r].leaves.len(),
            ));
            leaf_sizes(tree, l, out);
            leaf_sizes(tree, r, out);
        }
    }

    #[test]
    fn ten_leaf_shape() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let f = honest(10, &mut rng);
        let (agg, ss, rs) = &f.tree_inputs;
        let tree = build_trees(agg, ss, rs).unwrap();
        assert_eq!(tree.nodes().len(), 19);
        let mut splits = Vec::new();
        leaf_sizes(&tree, 0, &mut splits);
        assert_eq!(
            splits,
            [(10, 5, 5), (5, 2, 3), (2, 1, 1), (3, 1, 2), (2, 1, 1), (5, 2, 3), (2, 1, 1), (3, 1, 2), (2, 1, 1)]
        );
        let leaves: Vec<usize> = tree
            .nodes()
            .iter()
            .filter(|n| n.children.is_none())
            .map(|n| n.leaves.start)
            .collect();
        assert_eq!(leaves, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn two_leaf_tree_and_errors() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let f = honest(2, &mut rng);
        let (agg, ss, rs) = &f.tree_inputs;
        let tree = build_trees(agg, ss, rs).unwrap();
        assert_eq!(tree.nodes().len(), 3);
        assert_eq!(tree.root().children, Some((1, 2)));
        assert_eq!(
            build_trees(agg, &ss[..1], rs),
            Err(PrecheckError::LengthMismatch {
                keys: 2,
                responses: 1,
                nonces: 2
            })
        );
        assert_eq!(
            AggTree::<K>::from_leaves(&[K::generator()], &[K::scalar_one()], &[K::generator()]),
            Err(PrecheckError::TooFewLeaves(1))
        );
    }

    #[test]
    fn node_values_combine_children() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for n in 2..=40 {
            let f = honest(n, &mut rng);
            let (agg, ss, rs) = &f.tree_inputs;
            let tree = build_trees(agg, ss, rs).unwrap();
            assert_eq!(tree.nodes().len(), 2 * n - 1);
            for node in tree.nodes() {
                if let Some((l, r)) = node.children {
                    let (l, r) = (&tree.nodes()[l], &tree.nodes()[r]);
                    assert_eq!(node.key, l.key + r.key);
                    assert_eq!(node.response, l.response + r.response);
                    assert_eq!(node.nonce, l.nonce + r.nonce);
                    assert_eq!(node.leaves.len(), l.leaves.len() + r.leaves.len());
                }
            }
            assert_eq!(tree.root().key, agg.key());
        }
    }

    #[test]
    fn honest_root_passes_once() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let f = honest(7, &mut rng);
        let (agg, ss, rs) = &f.tree_inputs;
        let tree = build_trees(agg, ss, rs).unwrap();
        let mut stats = CheckStats::default();
        assert!(precheck_root(&tree, &f.avg, &mut stats));
        assert_eq!(stats.verifications, 1);
        let (bad, stats) = locate_invalid(&tree, &f.avg);
        assert!(bad.is_empty());
        assert_eq!(stats.verifications, 1);
    }

    #[test]
    fn four_leaves_third_corrupted() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut f = honest(4, &mut rng);
        f.tree_inputs.1[2] += K::scalar_one();
        let (agg, ss, rs) = &f.tree_inputs;
        let tree = build_trees(agg, ss, rs).unwrap();
        let mut stats = CheckStats::default();
        assert!(!precheck_root(&tree, &f.avg, &mut stats));
        let (bad, both) = locate_invalid_with(&tree, &f.avg, DescentRule::CheckBoth);
        assert_eq!(bad, [2].into_iter().collect());
        // root, {1,2}, {3,4}, {3}, {4}
        assert_eq!(both.verifications, 5);
        let (bad, inferred) = locate_invalid_with(&tree, &f.avg, DescentRule::InferSibling);
        assert_eq!(bad, [2].into_iter().collect());
        // root, {1,2}, {3}, {4}
        assert_eq!(inferred.verifications, 4);
    }

    #[test]
    fn matches_individual_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        for trial in 0..300 {
            let n = 2 + (rng.next_u32() % 30) as usize;
            let mut f = honest(n, &mut rng);
            let n_bad = (rng.next_u32() as usize) % (n.min(5) + 1);
            for _ in 0..n_bad {
                let i = rng.next_u32() as usize % n;
                f.tree_inputs.1[i] += K::random_nonzero_scalar(&mut rng);
            }
            let expected = individually_bad(&f);
            let (agg, ss, rs) = &f.tree_inputs;
            let tree = build_trees(agg, ss, rs).unwrap();
            for rule in [DescentRule::InferSibling, DescentRule::CheckBoth] {
                let (bad, _) = locate_invalid_with(&tree, &f.avg, rule);
                assert_eq!(bad, expected, "trial {trial}, {rule:?}");
            }
        }
    }

    #[test]
    fn single_corruption_cost_is_logarithmic() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for leaf in 0..20 {
            let mut f = honest(20, &mut rng);
            f.tree_inputs.1[leaf] += K::scalar_one();
            let (agg, ss, rs) = &f.tree_inputs;
            let tree = build_trees(agg, ss, rs).unwrap();
            for rule in [DescentRule::InferSibling, DescentRule::CheckBoth] {
                let (bad, stats) = locate_invalid_with(&tree, &f.avg, rule);
                assert_eq!(bad.len(), 1);
                assert!(stats.verifications <= 2 * 5 + 1);
                assert!(stats.verifications < 20);
            }
        }
    }
}
