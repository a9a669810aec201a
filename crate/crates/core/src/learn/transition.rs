use serde::{Deserialize, Serialize};

/// Replay stream. Each stream has its own reward and its own networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stream {
    /// Single-agent experience for the solitary policy, rewarded by the
    /// efficiency-safety reward.
    Solitary,
    /// Navigation module experience, rewarded by the efficiency-safety
    /// reward.
    Nav,
    /// Filter experience, rewarded by the fairness-efficiency reward.
    Filter,
}

impl Stream {
    pub const ALL: [Stream; 3] = [Stream::Solitary, Stream::Nav, Stream::Filter];

    pub fn as_str(self) -> &'static str {
        match self {
            Stream::Solitary => "solitary",
            Stream::Nav => "nav",
            Stream::Filter => "filter",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Stream::Solitary => 0,
            Stream::Nav => 1,
            Stream::Filter => 2,
        }
    }
}

/// Network rows of the messages received by one agent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MsgSet {
    pub current: Vec<f32>,
    pub next: Vec<f32>,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StoredAction {
    /// Normalized `(v / v_max, w / w_max)`.
    Continuous([f32; 2]),
    /// Filter decision, 1 = move.
    Binary(u8),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub stream: Stream,
    pub obs: Vec<f32>,
    pub msgs: MsgSet,
    pub action: StoredAction,
    pub reward: f32,
    pub next_obs: Vec<f32>,
    pub next_msgs: MsgSet,
    pub done: bool,
}
