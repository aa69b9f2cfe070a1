//! Event-driven simulation of the joint graph/walk and graph/voter processes.

pub mod log;
pub mod voter;
pub mod walks;

pub use log::{backward_walk, duality_check, forward_voter_from_log, simulate_with_log, DualityReport, EventLog, LogEntry};
pub use voter::{consensus_time_experiment, simulate_voter, ConsensusSummary, VoterInit, VoterTrace};
pub use walks::{default_t_cap, simulate_two_walks, simulate_two_walks_on, MeetingResult, StartMode};
