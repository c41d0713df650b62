//! Per-node clustering state machine: periodic data broadcasts, neighbor table
//! upkeep, similarity-driven membership and leader election.
//!
//! Node ids are expected to be small dense integers (the simulator assigns
//! `0..n`); tables are indexed by id.

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use crate::domain::{DataMessage, NeighborRecord, NodeId, Reading};
use crate::similarity::{aggregate_reading, mutual_similarity, SimilarityParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("cannot elect a leader from an empty cluster")]
    EmptyCluster,
    #[error("send period must be positive and jitter non-negative (period {period}, jitter {jitter_max})")]
    InvalidTiming { period: f64, jitter_max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MembershipOutcome {
    Joined,
    Removed,
    Unchanged,
}

/// Result of processing one data message, with the values the decision used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MembershipDecision {
    pub outcome: MembershipOutcome,
    pub similar: bool,
    pub local_aggregate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SendTiming {
    period: f64,
    jitter_max: f64,
}

impl SendTiming {
    pub fn new(period: f64, jitter_max: f64) -> Result<Self, ClusterError> {
        if period > 0.0 && period.is_finite() && jitter_max >= 0.0 && jitter_max.is_finite() {
            Ok(SendTiming { period, jitter_max })
        } else {
            Err(ClusterError::InvalidTiming { period, jitter_max })
        }
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn jitter_max(&self) -> f64 {
        self.jitter_max
    }
}

impl Default for SendTiming {
    fn default() -> Self {
        SendTiming {
            period: 1.0,
            jitter_max: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClusterState {
    self_id: NodeId,
    table: Vec<Option<NeighborRecord>>,
    members: Vec<bool>,
    member_count: u32,
    // Running Σ aR·nR and Σ nR over members; resynchronised on every send.
    weighted_sum: f64,
    weight_total: u64,
    leader: Option<NodeId>,
    next_send_at: f64,
}

impl ClusterState {
    pub fn new(self_id: NodeId) -> Self {
        ClusterState {
            self_id,
            table: Vec::new(),
            members: Vec::new(),
            member_count: 0,
            weighted_sum: 0.0,
            weight_total: 0,
            leader: None,
            next_send_at: 0.0,
        }
    }

    pub fn self_id(&self) -> NodeId {
        self.self_id
    }

    pub fn neighbor(&self, id: NodeId) -> Option<&NeighborRecord> {
        self.table.get(id.index()).and_then(Option::as_ref)
    }

    /// Every origin heard from, in id order.
    pub fn neighbor_table(&self) -> impl Iterator<Item = (NodeId, &NeighborRecord)> + '_ {
        self.table
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.as_ref().map(|r| (NodeId(i as u32), r)))
    }

    pub fn is_member(&self, id: NodeId) -> bool {
        self.members.get(id.index()).copied().unwrap_or(false)
    }

    pub fn members(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.members
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| NodeId(i as u32))
    }

    pub fn member_count(&self) -> u32 {
        self.member_count
    }

    pub fn leader(&self) -> Option<NodeId> {
        self.leader
    }

    pub fn is_leader(&self) -> bool {
        self.leader == Some(self.self_id)
    }

    pub fn next_send_at(&self) -> f64 {
        self.next_send_at
    }

    fn member_records(&self) -> impl Iterator<Item = &NeighborRecord> + '_ {
        self.members()
            .filter_map(|m| self.table[m.index()].as_ref())
    }

    /// Aggregate reading from the running sums.
    #[inline]
    pub fn aggregate(&self, own: f64) -> f64 {
        (own + self.weighted_sum) / (1 + self.weight_total) as f64
    }

    /// Aggregate reading recomputed from the member records.
    pub fn exact_aggregate(&self, own: f64) -> f64 {
        aggregate_reading(own, self.member_records())
    }

    fn resync(&mut self) {
        let (sum, total) = self.member_records().fold((0.0, 0u64), |(s, t), r| {
            (
                s + r.aggregate * f64::from(r.neighbor_count),
                t + u64::from(r.neighbor_count),
            )
        });
        self.weighted_sum = sum;
        self.weight_total = total;
    }

    fn ensure_slot(&mut self, idx: usize) {
        if idx >= self.table.len() {
            self.table.resize(idx + 1, None);
            self.members.resize(idx + 1, false);
        }
    }

    fn add_weight(&mut self, r: &NeighborRecord) {
        self.weighted_sum += r.aggregate * f64::from(r.neighbor_count);
        self.weight_total += u64::from(r.neighbor_count);
    }

    fn sub_weight(&mut self, r: &NeighborRecord) {
        self.weighted_sum -= r.aggregate * f64::from(r.neighbor_count);
        self.weight_total -= u64::from(r.neighbor_count);
        if self.member_count == 0 {
            self.weighted_sum = 0.0;
        }
    }

    /// Builds the periodic broadcast for `own`: own reading, aggregate over
    /// current members and the member count.
    pub fn build_data_message(&mut self, own: Reading) -> DataMessage {
        self.resync();
        let aggregate = self.aggregate(own.value());
        DataMessage::new(self.self_id, own, aggregate, self.member_count)
            .expect("aggregate of finite readings is finite")
    }

    /// Records the message and re-evaluates the origin's membership.
    ///
    /// The table entry is overwritten before the similarity test, so a current
    /// member's fresh values already count towards the local aggregate.
    pub fn on_data_message(
        &mut self,
        msg: &DataMessage,
        own: f64,
        params: SimilarityParams,
        now: f64,
    ) -> MembershipDecision {
        let origin = msg.origin();
        if origin == self.self_id {
            return MembershipDecision {
                outcome: MembershipOutcome::Unchanged,
                similar: true,
                local_aggregate: self.aggregate(own),
            };
        }
        let idx = origin.index();
        self.ensure_slot(idx);
        let was_member = self.members[idx];
        let fresh = NeighborRecord::from_message(msg, now);
        if was_member {
            let old = self.table[idx].expect("members always have a record");
            self.sub_weight(&old);
            self.add_weight(&fresh);
        }
        self.table[idx] = Some(fresh);

        let local_aggregate = self.aggregate(own);
        let similar = mutual_similarity(msg, own, local_aggregate, params);
        let outcome = match (similar, was_member) {
            (true, false) => {
                self.members[idx] = true;
                self.member_count += 1;
                self.add_weight(&fresh);
                MembershipOutcome::Joined
            }
            (false, true) => {
                self.members[idx] = false;
                self.member_count -= 1;
                self.sub_weight(&fresh);
                MembershipOutcome::Removed
            }
            _ => MembershipOutcome::Unchanged,
        };
        MembershipDecision {
            outcome,
            similar,
            local_aggregate,
        }
    }

    /// Drops `id` from the cluster (its table record is kept). Returns whether
    /// it was a member.
    pub fn remove_member(&mut self, id: NodeId) -> bool {
        if !self.is_member(id) {
            return false;
        }
        let idx = id.index();
        self.members[idx] = false;
        self.member_count -= 1;
        let r = self.table[idx].expect("members always have a record");
        self.sub_weight(&r);
        if self.leader == Some(id) {
            self.leader = None;
        }
        true
    }

    /// Self counts its member total; members count their last reported `nR`.
    pub fn peer_counts(&self) -> BTreeMap<NodeId, u32> {
        let mut counts: BTreeMap<NodeId, u32> = self
            .members()
            .map(|m| (m, self.table[m.index()].map_or(0, |r| r.neighbor_count)))
            .collect();
        counts.insert(self.self_id, self.member_count);
        counts
    }

    /// Re-runs the election over self and the members. Returns the new leader
    /// when it changed.
    pub fn reelect(&mut self) -> Option<NodeId> {
        let own = std::iter::once((self.self_id, self.member_count));
        let others = self
            .members()
            .map(|m| (m, self.table[m.index()].map_or(0, |r| r.neighbor_count)));
        let winner = elect_leader(own.chain(others)).expect("self is always a candidate");
        if self.leader == Some(winner) {
            None
        } else {
            self.leader = Some(winner);
            Some(winner)
        }
    }

    /// Next broadcast time: `now + period + U[0, jitter_max]`.
    pub fn schedule_next_send<R: Rng + ?Sized>(
        &mut self,
        now: f64,
        timing: SendTiming,
        rng: &mut R,
    ) -> f64 {
        let jitter = if timing.jitter_max > 0.0 {
            rng.random_range(0.0..=timing.jitter_max)
        } else {
            0.0
        };
        self.next_send_at = now + timing.period + jitter;
        self.next_send_at
    }
}

/// Highest count wins; ties go to the smallest id.
pub fn elect_leader<I>(peer_counts: I) -> Result<NodeId, ClusterError>
where
    I: IntoIterator<Item = (NodeId, u32)>,
{
    peer_counts
        .into_iter()
        .fold(
            None,
            |best: Option<(NodeId, u32)>, (id, count)| match best {
                Some((bid, bc)) if bc > count || (bc == count && bid < id) => Some((bid, bc)),
                _ => Some((id, count)),
            },
        )
        .map(|(id, _)| id)
        .ok_or(ClusterError::EmptyCluster)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn msg(origin: u32, ir: f64, ar: f64, nr: u32) -> DataMessage {
        DataMessage::new(NodeId(origin), Reading::new(ir, 0.0).unwrap(), ar, nr).unwrap()
    }

    fn p() -> SimilarityParams {
        SimilarityParams::new(3.0).unwrap()
    }

    #[test]
    fn isolated_node_reports_own_reading() {
        let mut s = ClusterState::new(NodeId(7));
        let m = s.build_data_message(Reading::new(15.0, 1.0).unwrap());
        assert_eq!(m.origin(), NodeId(7));
        assert_eq!(m.individual().value(), 15.0);
        assert_eq!(m.aggregate(), 15.0);
        assert_eq!(m.neighbor_count(), 0);
    }

    #[test]
    fn member_aggregate_feeds_message() {
        // n_a with one member reporting aR=16, nR=1.
        let mut a = ClusterState::new(NodeId(0));
        let d = a.on_data_message(&msg(1, 16.0, 16.0, 1), 15.0, p(), 1.0);
        assert_eq!(d.outcome, MembershipOutcome::Joined);
        let m = a.build_data_message(Reading::new(15.0, 2.0).unwrap());
        assert_eq!(m.aggregate(), 15.5);
        assert_eq!(m.neighbor_count(), 1);
    }

    #[test]
    fn neighbor_count_is_member_count_not_table_size() {
        let mut s = ClusterState::new(NodeId(0));
        for (i, r) in [16.0, 16.5, 15.5, 40.0, 45.0].into_iter().enumerate() {
            s.on_data_message(&msg(i as u32 + 1, r, r, 1), 16.0, p(), 1.0);
        }
        assert_eq!(s.neighbor_table().count(), 5);
        let m = s.build_data_message(Reading::new(16.0, 1.0).unwrap());
        assert_eq!(m.neighbor_count(), 3);
    }

    #[test]
    fn joins_similar_peer() {
        let mut a = ClusterState::new(NodeId(0));
        let d = a.on_data_message(&msg(1, 16.0, 16.0 + 1.0 / 3.0, 2), 15.0, p(), 2.0);
        assert_eq!(d.outcome, MembershipOutcome::Joined);
        assert!(a.is_member(NodeId(1)));
    }

    #[test]
    fn rejects_outlier() {
        let mut a = ClusterState::new(NodeId(0));
        let d = a.on_data_message(&msg(2, 45.0, 45.0, 0), 16.0, p(), 1.0);
        assert!(!d.similar);
        assert_eq!(d.outcome, MembershipOutcome::Unchanged);
        assert!(!a.is_member(NodeId(2)));
        // The record is stored even though the sender was rejected.
        assert_eq!(a.neighbor(NodeId(2)).unwrap().individual, 45.0);
    }

    #[test]
    fn member_turning_dissimilar_is_removed() {
        let mut a = ClusterState::new(NodeId(0));
        a.on_data_message(&msg(1, 16.0, 16.0, 1), 16.0, p(), 1.0);
        let again = a.on_data_message(&msg(1, 16.2, 16.1, 1), 16.0, p(), 2.0);
        assert_eq!(again.outcome, MembershipOutcome::Unchanged);
        let d = a.on_data_message(&msg(1, 45.0, 30.0, 1), 16.0, p(), 3.0);
        assert_eq!(d.outcome, MembershipOutcome::Removed);
        assert_eq!(a.member_count(), 0);
        assert_eq!(a.aggregate(16.0), 16.0);
    }

    #[test]
    fn table_overwritten_before_test() {
        // The member's fresh aggregate already shifts the local aggregate
        // used to judge it.
        let mut a = ClusterState::new(NodeId(0));
        a.on_data_message(&msg(1, 16.0, 16.0, 10), 16.0, p(), 1.0);
        let d = a.on_data_message(&msg(1, 17.0, 18.0, 10), 16.0, p(), 2.0);
        assert!((d.local_aggregate - (16.0 + 180.0) / 11.0).abs() < 1e-12);
    }

    #[test]
    fn self_messages_are_ignored() {
        let mut a = ClusterState::new(NodeId(0));
        let d = a.on_data_message(&msg(0, 16.0, 16.0, 1), 16.0, p(), 1.0);
        assert_eq!(d.outcome, MembershipOutcome::Unchanged);
        assert_eq!(a.neighbor_table().count(), 0);
    }

    #[test]
    fn incremental_sums_match_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut a = ClusterState::new(NodeId(0));
        for step in 0..5_000 {
            let origin = rng.random_range(1..40u32);
            let ir = 16.0 + rng.random_range(-2.0..2.0);
            let ar = 16.0 + rng.random_range(-2.0..2.0);
            let nr = rng.random_range(0..40u32);
            a.on_data_message(&msg(origin, ir, ar, nr), 16.0, p(), step as f64);
            let inc = a.aggregate(16.0);
            let exact = a.exact_aggregate(16.0);
            assert!((inc - exact).abs() < 1e-9, "{inc} vs {exact}");
        }
    }

    #[test]
    fn leader_argmax_with_smallest_id_tiebreak() {
        let counts = [
            (NodeId(0), 1),
            (NodeId(1), 3),
            (NodeId(2), 3),
            (NodeId(3), 2),
        ];
        assert_eq!(elect_leader(counts).unwrap(), NodeId(1));
        assert_eq!(elect_leader(counts.into_iter().rev()).unwrap(), NodeId(1));
        assert_eq!(elect_leader([(NodeId(0), 5)]).unwrap(), NodeId(0));
        assert_eq!(elect_leader([]), Err(ClusterError::EmptyCluster));
    }

    #[test]
    fn leader_matches_enumeration() {
        // Oracle: the first id (ascending) among those holding the maximum.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2_000 {
            let n = rng.random_range(1..12usize);
            let counts: Vec<(NodeId, u32)> = (0..n)
                .map(|i| (NodeId(i as u32 * 3 + 1), rng.random_range(0..4u32)))
                .collect();
            let max = counts.iter().map(|c| c.1).max().unwrap();
            let expected = counts
                .iter()
                .filter(|c| c.1 == max)
                .map(|c| c.0)
                .min()
                .unwrap();
            let mut shuffled = counts.clone();
            shuffled.reverse();
            assert_eq!(elect_leader(shuffled).unwrap(), expected);
        }
    }

    #[test]
    fn reelect_tracks_member_counts() {
        let mut a = ClusterState::new(NodeId(0));
        a.on_data_message(&msg(1, 16.0, 16.0, 2), 15.0, p(), 1.0);
        assert_eq!(a.reelect(), Some(NodeId(1)));
        assert!(!a.is_leader());
        assert_eq!(a.reelect(), None);
        a.remove_member(NodeId(1));
        assert_eq!(a.leader(), None);
        assert_eq!(a.reelect(), Some(NodeId(0)));
        assert!(a.is_leader());
    }

    #[test]
    fn next_send_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = ClusterState::new(NodeId(0));
        let t = SendTiming::new(1.0, 0.1).unwrap();
        for _ in 0..1000 {
            let at = s.schedule_next_send(0.0, t, &mut rng);
            assert!((1.0..=1.1).contains(&at));
        }
        let exact = SendTiming::new(1.0, 0.0).unwrap();
        assert_eq!(s.schedule_next_send(4.0, exact, &mut rng), 5.0);
        assert!(SendTiming::new(0.0, 0.1).is_err());
    }

    #[test]
    fn send_times_do_not_collide() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = SendTiming::default();
        let mut a = ClusterState::new(NodeId(0));
        let mut b = ClusterState::new(NodeId(1));
        let mut collisions = 0;
        for _ in 0..10_000 {
            if a.schedule_next_send(0.0, t, &mut rng) == b.schedule_next_send(0.0, t, &mut rng) {
                collisions += 1;
            }
        }
        assert_eq!(collisions, 0);
    }
}
