use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex, Weak};
use std::time::Duration;

use super::wire::ServerMessage;

pub const DEFAULT_QUEUE_CAPACITY: usize = 256;

struct QueueState {
    items: VecDeque<ServerMessage>,
    dropped: u64,
    closed: bool,
}

struct Queue {
    state: Mutex<QueueState>,
    ready: Condvar,
    capacity: usize,
}

impl Queue {
    fn push(&self, msg: ServerMessage) {
        let mut s = self.state.lock().expect("queue lock");
        if s.items.len() == self.capacity {
            s.items.pop_front();
            s.dropped += 1;
        }
        s.items.push_back(msg);
        self.ready.notify_one();
    }
}

/// Fan-out of session messages. Publishing never waits on a subscriber: a full
/// queue loses its oldest message and the subscriber is told how many it missed.
pub struct Hub {
    subscribers: Mutex<Vec<Weak<Queue>>>,
    capacity: usize,
}

impl Hub {
    pub fn new(capacity: usize) -> Self {
        Hub { subscribers: Mutex::new(Vec::new()), capacity: capacity.max(1) }
    }

    /// Register a subscriber whose stream starts with `first`.
    pub fn subscribe(&self, first: ServerMessage) -> Subscription {
        let queue = Arc::new(Queue {
            state: Mutex::new(QueueState { items: VecDeque::from([first]), dropped: 0, closed: false }),
            ready: Condvar::new(),
            capacity: self.capacity,
        });
        self.subscribers.lock().expect("hub lock").push(Arc::downgrade(&queue));
        Subscription { queue }
    }

    pub fn publish(&self, msg: &ServerMessage) {
        let mut subs = self.subscribers.lock().expect("hub lock");
        subs.retain(|w| match w.upgrade() {
            Some(q) => {
                q.push(msg.clone());
                true
            }
            None => false,
        });
    }

    /// End every stream; receivers drain what is queued and then see `None`.
    pub fn close(&self) {
        for q in self.subscribers.lock().expect("hub lock").drain(..).filter_map(|w| w.upgrade()) {
            q.state.lock().expect("queue lock").closed = true;
            q.ready.notify_all();
        }
    }

    pub fn subscriber_count(&self) -> usize {
        self.subscribers.lock().expect("hub lock").iter().filter(|w| w.strong_count() > 0).count()
    }
}

impl Default for Hub {
    fn default() -> Self {
        Hub::new(DEFAULT_QUEUE_CAPACITY)
    }
}

pub struct Subscription {
    queue: Arc<Queue>,
}

impl Subscription {
    /// Next message, waiting up to `timeout`. A gap notice precedes the first
    /// message after any loss. `None` on timeout or once the hub is closed and drained.
    pub fn recv_timeout(&self, timeout: Duration) -> Option<ServerMessage> {
        let s = self.queue.state.lock().expect("queue lock");
        let (mut s, _) = self
            .queue
            .ready
            .wait_timeout_while(s, timeout, |s| s.items.is_empty() && s.dropped == 0 && !s.closed)
            .expect("queue lock");
        if s.dropped > 0 {
            let missed = std::mem::take(&mut s.dropped);
            return Some(ServerMessage::Gap { missed });
        }
        s.items.pop_front()
    }

    pub fn try_recv(&self) -> Option<ServerMessage> {
        self.recv_timeout(Duration::ZERO)
    }

    pub fn is_closed(&self) -> bool {
        let s = self.queue.state.lock().expect("queue lock");
        s.closed && s.items.is_empty() && s.dropped == 0
    }
}
