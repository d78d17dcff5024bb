use std::fmt;
use std::time::Instant;

/// Timed stages of a run. `Preprocess` (order field, mask) is reported but
/// never counted in the algorithm total.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Preprocess,
    Init,
    LocalCompression,
    Stitch,
    Exchange,
    Rewrite,
}

impl Phase {
    /// The algorithm phases, in CSV row order.
    pub const ALGORITHM: [Phase; 5] = [
        Phase::Init,
        Phase::LocalCompression,
        Phase::Stitch,
        Phase::Exchange,
        Phase::Rewrite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Preprocess => "preprocess",
            Phase::Init => "init",
            Phase::LocalCompression => "localCompression",
            Phase::Stitch => "stitch",
            Phase::Exchange => "exchange",
            Phase::Rewrite => "rewrite",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhaseTimes {
    pub preprocess: f64,
    pub init: f64,
    pub local_compression: f64,
    pub stitch: f64,
    pub exchange: f64,
    pub rewrite: f64,
}

impl PhaseTimes {
    pub fn get(&self, phase: Phase) -> f64 {
        match phase {
            Phase::Preprocess => self.preprocess,
            Phase::Init => self.init,
            Phase::LocalCompression => self.local_compression,
            Phase::Stitch => self.stitch,
            Phase::Exchange => self.exchange,
            Phase::Rewrite => self.rewrite,
        }
    }

    pub fn slot(&mut self, phase: Phase) -> &mut f64 {
        match phase {
            Phase::Preprocess => &mut self.preprocess,
            Phase::Init => &mut self.init,
            Phase::LocalCompression => &mut self.local_compression,
            Phase::Stitch => &mut self.stitch,
            Phase::Exchange => &mut self.exchange,
            Phase::Rewrite => &mut self.rewrite,
        }
    }

    /// Runs `f` and adds its wall time to `phase`.
    pub fn time<T>(&mut self, phase: Phase, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        *self.slot(phase) += start.elapsed().as_secs_f64();
        out
    }

    /// Sum of the algorithm phases.
    pub fn algorithm_total(&self) -> f64 {
        Phase::ALGORITHM.iter().map(|&p| self.get(p)).sum()
    }

    /// Element-wise maximum; ranks run concurrently, so the slowest one
    /// sets the wall time.
    pub fn max(&self, other: &PhaseTimes) -> PhaseTimes {
        PhaseTimes {
            preprocess: self.preprocess.max(other.preprocess),
            init: self.init.max(other.init),
            local_compression: self.local_compression.max(other.local_compression),
            stitch: self.stitch.max(other.stitch),
            exchange: self.exchange.max(other.exchange),
            rewrite: self.rewrite.max(other.rewrite),
        }
    }
}

/// Counters from one rank's run of one algorithm.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RankStats {
    pub phases: PhaseTimes,
    /// Bytes sent during the algorithm phases (preprocessing excluded).
    pub bytes_sent: u64,
    /// Local compression sweeps, maximum over all compression calls.
    pub sweeps: usize,
    /// Global exchange rounds.
    pub rounds: usize,
    /// Ghost records this rank contributed, summed over rounds.
    pub ghost_records: u64,
    /// Exchange invocations.
    pub exchanges: usize,
}

/// Stats of one run combined over ranks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunStats {
    pub rank_count: usize,
    pub workers: usize,
    pub phases: PhaseTimes,
    pub bytes_sent: u64,
    pub sweeps: usize,
    pub rounds: usize,
    pub ghost_records: u64,
}

impl RunStats {
    pub fn combine(rank_stats: &[RankStats], workers: usize) -> Self {
        let mut out = RunStats {
            rank_count: rank_stats.len(),
            workers,
            ..Default::default()
        };
        for s in rank_stats {
            out.phases = out.phases.max(&s.phases);
            out.bytes_sent += s.bytes_sent;
            out.sweeps = out.sweeps.max(s.sweeps);
            out.rounds = out.rounds.max(s.rounds);
            out.ghost_records += s.ghost_records;
        }
        out
    }
}
