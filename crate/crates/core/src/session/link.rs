use std::collections::VecDeque;

use serde::Serialize;

use super::PeerId;

/// What the host chat program carries between the two peers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", content = "text", rename_all = "snake_case")]
pub enum LinkPayload {
    /// A wrapped application command (`ALTER APPLICATION ...`).
    Command(String),
    /// A chat instant message.
    Im(String),
}

#[derive(Debug, Clone)]
struct InFlight {
    deliver_at_us: u64,
    payload: LinkPayload,
}

/// Two independent FIFO queues with a fixed one-way delay each.
#[derive(Debug, Clone)]
pub struct Link {
    delay_us: [u64; 2],
    queues: [VecDeque<InFlight>; 2],
}

impl Link {
    pub fn new(a_to_b_us: u64, b_to_a_us: u64) -> Self {
        Self {
            delay_us: [a_to_b_us, b_to_a_us],
            queues: [VecDeque::new(), VecDeque::new()],
        }
    }

    pub fn delay_us(&self, from: PeerId) -> u64 {
        self.delay_us[from.index()]
    }

    /// Queues `payload` from `from`; returns its delivery time.
    pub fn send(&mut self, from: PeerId, now_us: u64, payload: LinkPayload) -> u64 {
        let q = &mut self.queues[from.index()];
        let due = now_us + self.delay_us[from.index()];
        // never overtake an earlier message
        let deliver_at_us = q.back().map_or(due, |last| last.deliver_at_us.max(due));
        q.push_back(InFlight { deliver_at_us, payload });
        deliver_at_us
    }

    /// Earliest pending delivery as `(time, sender)`; A's queue wins ties.
    pub fn next_delivery(&self) -> Option<(u64, PeerId)> {
        PeerId::ALL
            .into_iter()
            .filter_map(|p| self.queues[p.index()].front().map(|m| (m.deliver_at_us, p)))
            .min()
    }

    pub fn pop(&mut self, from: PeerId) -> Option<(u64, LinkPayload)> {
        self.queues[from.index()]
            .pop_front()
            .map(|m| (m.deliver_at_us, m.payload))
    }

    pub fn in_flight(&self) -> usize {
        self.queues.iter().map(VecDeque::len).sum()
    }

    pub fn is_idle(&self) -> bool {
        self.in_flight() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifo_per_direction() {
        let mut link = Link::new(25_000, 10_000);
        assert_eq!(link.send(PeerId::A, 0, LinkPayload::Im("one".into())), 25_000);
        assert_eq!(link.send(PeerId::A, 5, LinkPayload::Im("two".into())), 25_005);
        assert_eq!(link.send(PeerId::B, 1, LinkPayload::Im("back".into())), 10_001);
        assert_eq!(link.next_delivery(), Some((10_001, PeerId::B)));
        assert_eq!(link.pop(PeerId::B).unwrap().1, LinkPayload::Im("back".into()));
        assert_eq!(link.pop(PeerId::A).unwrap().1, LinkPayload::Im("one".into()));
        assert_eq!(link.pop(PeerId::A).unwrap().1, LinkPayload::Im("two".into()));
        assert!(link.is_idle());
    }
}
