//! Test oracles shared with the acceptance suite.

use mec_core::scheduler::ServerJob;

/// Independent event-driven FIFO multi-server simulation. Time jumps from
/// event to event; at each event finished units are released, arrivals join
/// the queue, and idle units take queued tasks in arrival order.
pub fn event_simulation(jobs: &[ServerJob], units: usize) -> Vec<(usize, f64, f64)> {
    let mut pending: Vec<ServerJob> = jobs.to_vec();
    pending.sort_by(|a, b| {
        a.arrival
            .partial_cmp(&b.arrival)
            .unwrap()
            .then(a.task_id.cmp(&b.task_id))
    });
    let mut pending = std::collections::VecDeque::from(pending);
    let mut queue: std::collections::VecDeque<ServerJob> = Default::default();
    let mut busy: Vec<Option<f64>> = vec![None; units];
    let mut out = Vec::new();

    loop {
        let next_arrival = pending.front().map(|j| j.arrival);
        let next_finish = busy
            .iter()
            .flatten()
            .copied()
            .fold(None, |m: Option<f64>, f| Some(m.map_or(f, |m| m.min(f))));
        let now = match (next_arrival, next_finish) {
            (None, None) => break,
            (Some(a), None) => a,
            (None, Some(f)) => f,
            (Some(a), Some(f)) => a.min(f),
        };
        for slot in busy.iter_mut() {
            if matches!(slot, Some(f) if *f <= now) {
                *slot = None;
            }
        }
        while pending.front().is_some_and(|j| j.arrival <= now) {
            queue.push_back(pending.pop_front().unwrap());
        }
        for slot in busy.iter_mut() {
            if slot.is_none() {
                if let Some(job) = queue.pop_front() {
                    let finish = now + job.service;
                    *slot = Some(finish);
                    out.push((job.task_id, now, finish));
                }
            }
        }
    }
    out.sort_by_key(|x| x.0);
    out
}
