//! Multi-scalar multiplication `Σ a_i · P_i`.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::group::Group;

struct Term<G: Group> {
    key: G::ScalarBytes,
    scalar: G::Scalar,
    point: G::Point,
}

impl<G: Group> PartialEq for Term<G> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl<G: Group> Eq for Term<G> {}

impl<G: Group> PartialOrd for Term<G> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<G: Group> Ord for Term<G> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.cmp(&other.key)
    }
}

impl<G: Group> Term<G> {
    fn new(scalar: G::Scalar, point: G::Point) -> Self {
        Term {
            key: G::scalar_to_bytes(&scalar),
            scalar,
            point,
        }
    }
}

fn bit_len(bytes: &[u8]) -> usize {
    for (i, b) in bytes.iter().enumerate() {
        if *b != 0 {
            return (bytes.len() - i) * 8 - b.leading_zeros() as usize;
        }
    }
    0
}

/// Bos-Coster: repeatedly rewrite `a·P + b·Q` (a ≥ b) as `(a−b)·P + b·(P+Q)`.
///
/// A term whose scalar is far larger than the runner-up is multiplied out
/// directly, which bounds the number of subtraction steps.
pub fn bos_coster<G: Group>(terms: &[(G::Scalar, G::Point)]) -> G::Point {
    const CUTOFF_BITS: usize = 6;

    let mut heap: BinaryHeap<Term<G>> = terms
        .iter()
        .filter(|(s, _)| !G::is_zero(s))
        .map(|(s, p)| Term::new(*s, *p))
        .collect();
    let mut acc = G::identity();

    while let Some(top) = heap.pop() {
        let Some(next) = heap.peek() else {
            acc += top.point * top.scalar;
            break;
        };
        if bit_len(top.key.as_ref()) > bit_len(next.key.as_ref()) + CUTOFF_BITS {
            acc += top.point * top.scalar;
            continue;
        }
        let next = heap.pop().expect("peeked");
        let diff = top.scalar - next.scalar;
        if !G::is_zero(&diff) {
            heap.push(Term::new(diff, top.point));
        }
        heap.push(Term::new(next.scalar, top.point + next.point));
    }
    acc
}

/// Term-by-term evaluation; the reference for [`bos_coster`].
pub fn naive<G: Group>(terms: &[(G::Scalar, G::Point)]) -> G::Point {
    terms
        .iter()
        .fold(G::identity(), |acc, (s, p)| acc + *p * *s)
}

/// Collects `(scalar, point)` pairs from parallel slices.
pub fn zip_terms<G: Group>(scalars: &[G::Scalar], points: &[G::Point]) -> Vec<(G::Scalar, G::Point)> {
    scalars.iter().copied().zip(points.iter().copied()).collect()
}
