use std::io::Write;

use super::{Event, EventKind, Observer, Simulation};

/// Writes one line per event: `t kind id payload`.
///
/// `payload` is the new state for updates (0/1), the bit mask of layers that
/// transmitted for attempts, and the empty string for recoveries.
pub struct TrajectoryLogger<W: Write> {
    out: W,
    error: Option<std::io::Error>,
}

impl<W: Write> TrajectoryLogger<W> {
    pub fn new(out: W) -> Self {
        Self { out, error: None }
    }

    /// The writer, or the first write error encountered.
    pub fn finish(self) -> std::io::Result<W> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(self.out),
        }
    }
}

impl<W: Write> Observer for TrajectoryLogger<W> {
    fn on_event(&mut self, _sim: &Simulation<'_>, ev: &Event) {
        if self.error.is_some() {
            return;
        }
        let res = match ev.kind {
            EventKind::Update { edge, open } => writeln!(self.out, "{} update {} {}", ev.time, edge.0, u8::from(open)),
            EventKind::Attempt { edge, infected } => writeln!(self.out, "{} attempt {} {}", ev.time, edge.0, infected),
            EventKind::Recover { vertex } => writeln!(self.out, "{} recover {} ", ev.time, vertex.0),
        };
        if let Err(e) = res {
            self.error = Some(e);
        }
    }
}
